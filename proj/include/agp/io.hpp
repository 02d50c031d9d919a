#pragma once

#include "agp/common.hpp"
#include "agp/objectives.hpp"
#include "agp/optimizer.hpp"
#include "agp/pushsum.hpp"
#include "agp/runtime.hpp"
#include "agp/schedule.hpp"
#include "agp/topology.hpp"

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <set>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

namespace agp {

namespace io {

inline std::string fmt(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

inline std::vector<std::string> split(const std::string& line, char sep) {
  std::vector<std::string> out;
  std::string cur;
  for (char c : line) {
    if (c == sep) {
      out.push_back(cur);
      cur.clear();
    } else {
      cur.push_back(c);
    }
  }
  out.push_back(cur);
  return out;
}

inline double parse_double(const std::string& token, int line_no) {
  try {
    std::size_t pos = 0;
    const double v = std::stod(token, &pos);
    if (pos != token.size()) throw std::invalid_argument(token);
    return v;
  } catch (const std::exception&) {
    throw FormatError("line " + std::to_string(line_no) + ": bad number '" + token + "'");
  }
}

inline long parse_long(const std::string& token, int line_no) {
  try {
    std::size_t pos = 0;
    const long v = std::stol(token, &pos);
    if (pos != token.size()) throw std::invalid_argument(token);
    return v;
  } catch (const std::exception&) {
    throw FormatError("line " + std::to_string(line_no) + ": bad integer '" + token + "'");
  }
}

// write-temp-rename so partially written artifacts never appear under the
// final name
inline void atomic_write(const std::filesystem::path& path, const std::string& content) {
  namespace fs = std::filesystem;
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  const fs::path tmp = path.string() + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw FormatError("cannot open " + tmp.string() + " for writing");
    out << content;
    if (!out) throw FormatError("failed writing " + tmp.string());
  }
  fs::rename(tmp, path);
}

inline std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw MissingArtifacts("cannot open " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

}  // namespace io

// ---------------------------------------------------------------------------
// Graph edge list: one "i j" pair per line, 1-based, '#' starts a comment.

inline ReferenceGraph parse_edge_list(const std::string& text, int n, bool add_self_loops = true) {
  std::set<std::pair<int, int>> edges;
  std::istringstream in(text);
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line = line.substr(0, hash);
    std::istringstream ls(line);
    long a, b;
    if (!(ls >> a)) continue;  // blank or comment-only
    if (!(ls >> b)) throw FormatError("line " + std::to_string(line_no) + ": expected 'i j'");
    std::string rest;
    if (ls >> rest) throw FormatError("line " + std::to_string(line_no) + ": trailing '" + rest + "'");
    edges.emplace(static_cast<int>(a) - 1, static_cast<int>(b) - 1);
  }
  return build_reference_graph(n, edges, add_self_loops);
}

inline std::string edge_list_text(const ReferenceGraph& g) {
  std::ostringstream out;
  out << "# directed edge list, 1-based indices\n";
  for (const auto& [i, j] : g.edges()) out << (i + 1) << " " << (j + 1) << "\n";
  return out.str();
}

// ---------------------------------------------------------------------------
// Schedule text format:
//   header lines "n ...", "K ...", "tau_proc_max ...", "tau_msg_max ...",
//   "seed ...", then per index
//   "k | active: 1,3 | delay 1->1: 0 1->2: 2 3->3: 0 ..."
// Agent ids are 1-based in the file.

inline std::string schedule_text(const Schedule& s) {
  std::ostringstream out;
  out << "# gossip schedule\n";
  out << "n " << s.agent_count() << "\n";
  out << "K " << s.horizon() << "\n";
  out << "tau_proc_max " << s.tau_proc_max() << "\n";
  out << "tau_msg_max " << s.tau_msg_max() << "\n";
  out << "seed " << s.seed() << "\n";
  for (int k = 0; k < s.horizon(); ++k) {
    out << k << " | active:";
    bool first = true;
    for (int i : s.active(k)) {
      out << (first ? " " : ",") << (i + 1);
      first = false;
    }
    out << " | delay";
    for (int i : s.active(k))
      for (int j = 0; j < s.agent_count(); ++j)
        if (s.has_delay(k, i, j)) out << " " << (i + 1) << "->" << (j + 1) << ": " << s.delay(k, i, j);
    out << "\n";
  }
  return out.str();
}

inline Schedule parse_schedule(const std::string& text) {
  std::istringstream in(text);
  std::string line;
  int line_no = 0;
  int n = -1, K = -1, tproc = -1, tmsg = -1;
  std::uint64_t seed = 0;
  Schedule s;
  bool header_done = false;

  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty() || line[0] == '#') continue;
    if (!header_done) {
      std::istringstream ls(line);
      std::string key;
      ls >> key;
      if (key == "n" || key == "K" || key == "tau_proc_max" || key == "tau_msg_max" ||
          key == "seed") {
        long v;
        if (!(ls >> v)) throw FormatError("line " + std::to_string(line_no) + ": bad header");
        if (key == "n") n = static_cast<int>(v);
        else if (key == "K") K = static_cast<int>(v);
        else if (key == "tau_proc_max") tproc = static_cast<int>(v);
        else if (key == "tau_msg_max") tmsg = static_cast<int>(v);
        else seed = static_cast<std::uint64_t>(v);
        continue;
      }
      if (n < 0 || K < 0 || tproc < 0 || tmsg < 0)
        throw FormatError("line " + std::to_string(line_no) + ": incomplete schedule header");
      s = Schedule(n, K, tproc, tmsg, seed);
      header_done = true;
    }
    const auto parts = io::split(line, '|');
    if (parts.size() != 3)
      throw FormatError("line " + std::to_string(line_no) + ": expected 'k | active: ... | delay ...'");
    const int k = static_cast<int>(io::parse_long(io::split(parts[0], ' ')[0], line_no));
    if (k < 0 || k >= K) throw FormatError("line " + std::to_string(line_no) + ": index out of range");

    std::string active_part = parts[1];
    const auto colon = active_part.find(':');
    if (colon == std::string::npos)
      throw FormatError("line " + std::to_string(line_no) + ": missing 'active:'");
    std::vector<int> agents;
    {
      std::string list = active_part.substr(colon + 1);
      std::istringstream as(list);
      std::string tok;
      while (std::getline(as, tok, ',')) {
        std::string trimmed;
        for (char c : tok)
          if (!std::isspace(static_cast<unsigned char>(c))) trimmed.push_back(c);
        if (trimmed.empty()) continue;
        agents.push_back(static_cast<int>(io::parse_long(trimmed, line_no)) - 1);
      }
    }
    s.set_active(k, agents);

    std::istringstream ds(parts[2]);
    std::string tok;
    ds >> tok;  // "delay"
    if (tok != "delay")
      throw FormatError("line " + std::to_string(line_no) + ": missing 'delay' section");
    std::string edge, value;
    while (ds >> edge >> value) {
      const auto arrow = edge.find("->");
      if (arrow == std::string::npos)
        throw FormatError("line " + std::to_string(line_no) + ": bad edge '" + edge + "'");
      if (!value.empty() && value.back() == ':')
        throw FormatError("line " + std::to_string(line_no) + ": bad delay entry");
      std::string lhs = edge.substr(0, arrow);
      std::string rhs = edge.substr(arrow + 2);
      if (!rhs.empty() && rhs.back() == ':') rhs.pop_back();
      const int i = static_cast<int>(io::parse_long(lhs, line_no)) - 1;
      const int j = static_cast<int>(io::parse_long(rhs, line_no)) - 1;
      const int r = static_cast<int>(io::parse_long(value, line_no));
      s.set_delay(k, i, j, r);
    }
  }
  if (!header_done) throw FormatError("schedule text has no body");
  return s;
}

// ---------------------------------------------------------------------------
// Trajectory CSVs. One row per (index, agent); the mean-state columns repeat
// across agents of the same index.

inline std::string pushsum_trajectory_csv(const PushSumTrajectory& traj) {
  std::ostringstream out;
  out << "k,agent";
  for (int c = 0; c < traj.d; ++c) out << ",z_" << c;
  for (int c = 0; c < traj.d; ++c) out << ",xbar_" << c;
  out << ",consensus_error\n";
  for (int k = 0; k <= traj.K; ++k)
    for (int i = 0; i < traj.n; ++i) {
      out << k << "," << (i + 1);
      for (int c = 0; c < traj.d; ++c) out << "," << io::fmt(traj.z_real[k](i, c));
      for (int c = 0; c < traj.d; ++c) out << "," << io::fmt(traj.xbar[k][c]);
      out << "," << io::fmt((traj.z_real[k].row(i).transpose() - traj.xbar[k]).cwiseAbs().sum());
      out << "\n";
    }
  return out.str();
}

inline std::string agp_trajectory_csv(const AgpRun& run) {
  std::ostringstream out;
  out << "k,agent";
  for (int c = 0; c < run.d; ++c) out << ",z_" << c;
  for (int c = 0; c < run.d; ++c) out << ",xbar_" << c;
  out << ",alpha_delta\n";
  for (int k = 0; k <= run.K; ++k)
    for (int i = 0; i < run.n; ++i) {
      out << k << "," << (i + 1);
      for (int c = 0; c < run.d; ++c) out << "," << io::fmt(run.z_real[k](i, c));
      for (int c = 0; c < run.d; ++c) out << "," << io::fmt(run.xbar[k][c]);
      out << "," << io::fmt(k < run.K ? run.alpha_delta[k][i] : 0.0);
      out << "\n";
    }
  return out.str();
}

inline AgpRun parse_agp_trajectory_csv(const std::string& text) {
  std::istringstream in(text);
  std::string line;
  if (!std::getline(in, line)) throw FormatError("line 1: empty trajectory file");
  const auto header = io::split(line, ',');
  if (header.size() < 4 || header[0] != "k" || header[1] != "agent" ||
      header.back() != "alpha_delta")
    throw FormatError("line 1: unexpected trajectory header");
  int d = 0;
  while (2 + d < static_cast<int>(header.size()) && header[2 + d] == "z_" + std::to_string(d)) ++d;
  if (d == 0 || static_cast<int>(header.size()) != 3 + 2 * d)
    throw FormatError("line 1: cannot infer dimension from header");

  AgpRun run;
  run.d = d;
  int line_no = 1;
  int max_k = -1, max_agent = -1;
  std::vector<std::tuple<int, int, std::vector<double>>> rows;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    const auto f = io::split(line, ',');
    if (static_cast<int>(f.size()) != 3 + 2 * d)
      throw FormatError("line " + std::to_string(line_no) + ": expected " +
                        std::to_string(3 + 2 * d) + " fields, got " + std::to_string(f.size()));
    const int k = static_cast<int>(io::parse_long(f[0], line_no));
    const int agent = static_cast<int>(io::parse_long(f[1], line_no)) - 1;
    if (k < 0 || agent < 0)
      throw FormatError("line " + std::to_string(line_no) + ": negative index");
    std::vector<double> vals;
    vals.reserve(2 * d + 1);
    for (int c = 0; c < 2 * d + 1; ++c) vals.push_back(io::parse_double(f[2 + c], line_no));
    max_k = std::max(max_k, k);
    max_agent = std::max(max_agent, agent);
    rows.emplace_back(k, agent, std::move(vals));
  }
  if (max_k < 1 || max_agent < 0) throw FormatError("trajectory has no data rows");
  run.K = max_k;
  run.n = max_agent + 1;
  run.xbar.assign(run.K + 1, Vec::Zero(d));
  run.z_real.assign(run.K + 1, Mat::Zero(run.n, d));
  run.alpha_delta.assign(run.K, Vec::Zero(run.n));
  std::vector<std::vector<char>> seen(run.K + 1, std::vector<char>(run.n, 0));
  for (const auto& [k, agent, vals] : rows) {
    if (agent >= run.n || k > run.K) throw FormatError("trajectory row out of range");
    for (int c = 0; c < d; ++c) run.z_real[k](agent, c) = vals[c];
    for (int c = 0; c < d; ++c) run.xbar[k][c] = vals[d + c];
    if (k < run.K) run.alpha_delta[k][agent] = vals[2 * d];
    seen[k][agent] = 1;
  }
  for (int k = 0; k <= run.K; ++k)
    for (int i = 0; i < run.n; ++i)
      if (!seen[k][i])
        throw FormatError("trajectory is missing the row for k=" + std::to_string(k) +
                          " agent " + std::to_string(i + 1));
  return run;
}

// ---------------------------------------------------------------------------
// Objective serialization: "agent,part,row,col,value" with part A or b.

inline std::string objectives_csv(const std::vector<QuadraticObjective>& objs) {
  std::ostringstream out;
  out << "agent,part,row,col,value\n";
  for (std::size_t idx = 0; idx < objs.size(); ++idx) {
    const auto& f = objs[idx];
    for (int r = 0; r < f.dim(); ++r)
      for (int c = 0; c < f.dim(); ++c)
        out << (idx + 1) << ",A," << r << "," << c << "," << io::fmt(f.matrix()(r, c)) << "\n";
    for (int r = 0; r < f.dim(); ++r)
      out << (idx + 1) << ",b," << r << ",0," << io::fmt(f.offset()[r]) << "\n";
  }
  return out.str();
}

inline std::vector<QuadraticObjective> parse_objectives_csv(const std::string& text) {
  std::istringstream in(text);
  std::string line;
  if (!std::getline(in, line) || line != "agent,part,row,col,value")
    throw FormatError("line 1: unexpected objectives header");
  struct Raw {
    std::vector<std::tuple<int, int, double>> a;
    std::vector<std::pair<int, double>> b;
  };
  std::map<int, Raw> raw;
  int line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    const auto f = io::split(line, ',');
    if (f.size() != 5) throw FormatError("line " + std::to_string(line_no) + ": expected 5 fields");
    const int agent = static_cast<int>(io::parse_long(f[0], line_no));
    const int r = static_cast<int>(io::parse_long(f[2], line_no));
    const int c = static_cast<int>(io::parse_long(f[3], line_no));
    const double v = io::parse_double(f[4], line_no);
    if (f[1] == "A") raw[agent].a.emplace_back(r, c, v);
    else if (f[1] == "b") raw[agent].b.emplace_back(r, v);
    else throw FormatError("line " + std::to_string(line_no) + ": part must be A or b");
  }
  std::vector<QuadraticObjective> objs;
  int expected = 1;
  for (const auto& [agent, r] : raw) {
    if (agent != expected++) throw FormatError("objective agents must be contiguous from 1");
    const int d = static_cast<int>(r.b.size());
    Mat A = Mat::Zero(d, d);
    Vec b = Vec::Zero(d);
    for (const auto& [row, col, v] : r.a) {
      if (row < 0 || row >= d || col < 0 || col >= d)
        throw FormatError("objective entry out of range for agent " + std::to_string(agent));
      A(row, col) = v;
    }
    for (const auto& [row, v] : r.b) b[row] = v;
    objs.emplace_back(std::move(A), std::move(b));
  }
  if (objs.empty()) throw FormatError("objectives file has no agents");
  return objs;
}

// ---------------------------------------------------------------------------
// Labeled dataset CSV for the logistic objective: feature columns then an
// integer class label in the last column. Header row mandatory.

inline std::pair<Mat, Mat> parse_labeled_csv(const std::string& text, int classes) {
  std::istringstream in(text);
  std::string line;
  if (!std::getline(in, line)) throw FormatError("line 1: empty dataset");
  const int cols = static_cast<int>(io::split(line, ',').size());
  if (cols < 2) throw FormatError("line 1: need at least one feature and a label column");
  std::vector<std::vector<double>> rows;
  int line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    const auto f = io::split(line, ',');
    if (static_cast<int>(f.size()) != cols)
      throw FormatError("line " + std::to_string(line_no) + ": expected " + std::to_string(cols) +
                        " fields");
    std::vector<double> vals;
    for (const auto& tok : f) vals.push_back(io::parse_double(tok, line_no));
    const long label = static_cast<long>(vals.back());
    if (label < 0 || label >= classes)
      throw FormatError("line " + std::to_string(line_no) + ": label out of range");
    rows.push_back(std::move(vals));
  }
  Mat X(rows.size(), cols - 1);
  Mat Y = Mat::Zero(rows.size(), classes);
  for (std::size_t r = 0; r < rows.size(); ++r) {
    for (int c = 0; c < cols - 1; ++c) X(r, c) = rows[r][c];
    Y(r, static_cast<long>(rows[r].back())) = 1.0;
  }
  return {std::move(X), std::move(Y)};
}

// ---------------------------------------------------------------------------
// Event log CSV: index,wall_ms,agent,kind,msg_id

inline std::string event_log_csv(const EventLog& log) {
  std::ostringstream out;
  out << "index,wall_ms,agent,kind,msg_id\n";
  for (const Event& e : log.records)
    out << e.index << "," << io::fmt(e.wall_ms) << "," << (e.agent + 1) << "," << to_string(e.kind)
        << "," << e.msg_id << "\n";
  return out.str();
}

inline EventLog parse_event_log_csv(const std::string& text) {
  std::istringstream in(text);
  std::string line;
  if (!std::getline(in, line) || line != "index,wall_ms,agent,kind,msg_id")
    throw FormatError("line 1: unexpected event log header");
  EventLog log;
  int line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    const auto f = io::split(line, ',');
    if (f.size() != 5) throw FormatError("line " + std::to_string(line_no) + ": expected 5 fields");
    Event e;
    e.index = io::parse_long(f[0], line_no);
    e.wall_ms = io::parse_double(f[1], line_no);
    e.agent = static_cast<int>(io::parse_long(f[2], line_no)) - 1;
    if (f[3] == "activation") e.kind = EventKind::activation;
    else if (f[3] == "send") e.kind = EventKind::send;
    else if (f[3] == "deliver") e.kind = EventKind::deliver;
    else throw FormatError("line " + std::to_string(line_no) + ": unknown kind '" + f[3] + "'");
    e.msg_id = io::parse_long(f[4], line_no);
    log.records.push_back(e);
    if (e.kind == EventKind::activation)
      log.activation_count = std::max(log.activation_count, e.index + 1);
  }
  return log;
}

}  // namespace agp
