#include "district.hpp"

#include <algorithm>
#include <cctype>
#include <fstream>
#include <map>
#include <sstream>

namespace schoolmerge {

namespace {

std::string lower(std::string_view s) {
  std::string out(s);
  std::transform(out.begin(), out.end(), out.begin(),
                 [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
  return out;
}

}  // namespace

GroupTaxonomy::GroupTaxonomy(std::vector<std::string> groups,
                             const std::vector<std::string>& focal_labels)
    : groups_(std::move(groups)), focal_(groups_.size(), false) {
  if (groups_.empty()) throw ValidationError("group taxonomy is empty");
  std::set<std::string> seen;
  for (const auto& g : groups_) {
    if (!seen.insert(g).second) throw ValidationError("duplicate group label '" + g + "'");
  }
  for (const auto& f : focal_labels) {
    auto idx = index_of(f);
    if (!idx) throw ValidationError("focal group '" + f + "' is not a known group");
    focal_[*idx] = true;
  }
  const auto focal_count = std::count(focal_.begin(), focal_.end(), true);
  if (focal_count == 0 || focal_count == static_cast<long>(groups_.size())) {
    throw ValidationError("focal partition must split groups into two non-empty sides");
  }
}

std::vector<std::string> GroupTaxonomy::focal_labels() const {
  std::vector<std::string> out;
  for (std::size_t k = 0; k < groups_.size(); ++k) {
    if (focal_[k]) out.push_back(groups_[k]);
  }
  return out;
}

std::optional<std::size_t> GroupTaxonomy::index_of(std::string_view label) const {
  for (std::size_t k = 0; k < groups_.size(); ++k) {
    if (groups_[k] == label) return k;
  }
  return std::nullopt;
}

GroupTaxonomy objective_taxonomy(const GroupTaxonomy& base, std::string_view variant) {
  std::vector<std::string> wanted;
  if (variant == "white-vs-poc") {
    wanted = {"white"};
  } else if (variant == "bhwa") {
    wanted = {"white", "asian"};
  } else {
    throw ConfigError("objective", "unknown objective variant '" + std::string(variant) +
                                       "' (expected white-vs-poc or bhwa)");
  }
  std::vector<std::string> focal;
  for (const auto& w : wanted) {
    auto it = std::find_if(base.groups().begin(), base.groups().end(),
                           [&](const std::string& g) { return lower(g) == w; });
    if (it == base.groups().end()) {
      throw ConfigError("objective", "objective '" + std::string(variant) +
                                         "' needs a group labelled '" + w + "'");
    }
    focal.push_back(*it);
  }
  try {
    return base.with_focal(focal);
  } catch (const ValidationError& e) {
    throw ConfigError("objective", e.what());
  }
}

Count Enrollment::total() const {
  Count t = 0;
  for (Count c : counts_) t += c;
  return t;
}

Count Enrollment::grade_total(std::size_t grade) const {
  Count t = 0;
  for (std::size_t k = 0; k < groups_; ++k) t += at(grade, k);
  return t;
}

Count Enrollment::group_total(std::size_t group) const {
  Count t = 0;
  for (std::size_t g = 0; g < grades_; ++g) t += at(g, group);
  return t;
}

Enrollment& Enrollment::operator+=(const Enrollment& other) {
  if (other.grades_ != grades_ || other.groups_ != groups_) {
    throw std::invalid_argument("enrollment shape mismatch");
  }
  for (std::size_t i = 0; i < counts_.size(); ++i) counts_[i] += other.counts_[i];
  return *this;
}

SchoolTotals school_totals(const Enrollment& enrollment, const GroupTaxonomy& taxonomy) {
  SchoolTotals out;
  for (std::size_t g = 0; g < enrollment.grades(); ++g) {
    for (std::size_t k = 0; k < enrollment.groups(); ++k) {
      const Count c = enrollment.at(g, k);
      out.total += c;
      if (taxonomy.is_focal(k)) out.focal += c;
    }
  }
  return out;
}

void require_nondegenerate(const SchoolTotals& district) {
  if (district.total <= 0 || district.focal <= 0 || district.focal >= district.total) {
    throw DegenerateTotalsError("degenerate group totals: focal " + std::to_string(district.focal) +
                                " of " + std::to_string(district.total) + " students");
  }
}

DistrictInstance DistrictInstance::create(
    std::string name, std::vector<std::string> grade_labels, GroupTaxonomy taxonomy,
    std::vector<School> schools,
    const std::vector<std::pair<std::string, std::string>>& adjacency) {
  DistrictInstance inst;
  inst.name_ = std::move(name);
  inst.grade_labels_ = std::move(grade_labels);
  inst.taxonomy_ = std::move(taxonomy);

  if (inst.grade_labels_.empty()) throw ValidationError("grade_domain is empty");
  {
    std::set<std::string> seen(inst.grade_labels_.begin(), inst.grade_labels_.end());
    if (seen.size() != inst.grade_labels_.size()) throw ValidationError("duplicate grade label");
  }
  if (schools.empty()) throw ValidationError("instance has no schools");

  std::sort(schools.begin(), schools.end(),
            [](const School& a, const School& b) { return a.id < b.id; });
  for (std::size_t i = 0; i < schools.size(); ++i) {
    const auto& s = schools[i];
    if (s.id.empty()) throw ValidationError("school with empty id");
    if (i > 0 && schools[i - 1].id == s.id) throw ValidationError("duplicate school id '" + s.id + "'");
    if (s.enrollment.grades() != inst.grade_labels_.size() ||
        s.enrollment.groups() != inst.taxonomy_.size()) {
      throw ValidationError("school '" + s.id + "' enrollment does not match the instance shape");
    }
    for (std::size_t g = 0; g < s.enrollment.grades(); ++g) {
      for (std::size_t k = 0; k < s.enrollment.groups(); ++k) {
        if (s.enrollment.at(g, k) < 0) {
          throw ValidationError("school '" + s.id + "' has a negative enrollment count");
        }
      }
    }
    if (s.capacity < 0) throw ValidationError("school '" + s.id + "' has negative capacity");
    if (s.enrollment.total() > s.capacity) {
      inst.warnings_.push_back("school '" + s.id + "' enrolls " + std::to_string(s.enrollment.total()) +
                               " students above its capacity " + std::to_string(s.capacity));
    }
    inst.district_ids_.insert(s.district_id);
  }
  inst.schools_ = std::move(schools);
  inst.neighbors_.assign(inst.schools_.size(), {});

  std::set<Edge> edges;
  for (const auto& [a, b] : adjacency) {
    auto ia = inst.index_of(a);
    auto ib = inst.index_of(b);
    if (!ia || !ib) {
      throw ValidationError("adjacency edge [" + a + ", " + b + "] names an unknown school id");
    }
    if (*ia == *ib) throw ValidationError("adjacency self-pair for school '" + a + "'");
    edges.insert(std::minmax(*ia, *ib));
  }
  inst.edges_.assign(edges.begin(), edges.end());
  for (const auto& [a, b] : inst.edges_) {
    inst.neighbors_[a].push_back(b);
    inst.neighbors_[b].push_back(a);
  }
  for (auto& n : inst.neighbors_) std::sort(n.begin(), n.end());

  require_nondegenerate(inst.district_totals());
  return inst;
}

bool DistrictInstance::adjacent(SchoolIndex a, SchoolIndex b) const {
  const auto& n = neighbors_[a];
  return std::binary_search(n.begin(), n.end(), b);
}

std::optional<SchoolIndex> DistrictInstance::index_of(std::string_view id) const {
  auto it = std::lower_bound(schools_.begin(), schools_.end(), id,
                             [](const School& s, std::string_view v) { return s.id < v; });
  if (it == schools_.end() || it->id != id) return std::nullopt;
  return static_cast<SchoolIndex>(it - schools_.begin());
}

SchoolTotals DistrictInstance::district_totals(const GroupTaxonomy& taxonomy) const {
  SchoolTotals out;
  for (const auto& s : schools_) {
    auto t = school_totals(s.enrollment, taxonomy);
    out.total += t.total;
    out.focal += t.focal;
  }
  return out;
}

std::optional<GradeLevel> DistrictInstance::grade_of(std::string_view label) const {
  for (std::size_t g = 0; g < grade_labels_.size(); ++g) {
    if (grade_labels_[g] == label) return GradeLevel{g};
  }
  return std::nullopt;
}

namespace {

using nlohmann::json;

const json& field(const json& obj, const char* key) {
  auto it = obj.find(key);
  if (it == obj.end()) throw ParseError(std::string("missing field '") + key + "'");
  return *it;
}

std::vector<std::string> string_list(const json& arr, const char* what) {
  if (!arr.is_array()) throw ParseError(std::string(what) + " must be an array");
  std::vector<std::string> out;
  for (const auto& v : arr) {
    if (!v.is_string()) throw ParseError(std::string(what) + " entries must be strings");
    out.push_back(v.get<std::string>());
  }
  return out;
}

Count count_value(const json& v, const std::string& where) {
  if (!v.is_number_integer() && !(v.is_number() && v.get<double>() == static_cast<double>(v.get<Count>()))) {
    throw ParseError(where + " must be an integer count");
  }
  return v.get<Count>();
}

}  // namespace

DistrictInstance instance_from_json(const json& doc, std::string fallback_name) {
  if (!doc.is_object()) throw ParseError("instance document must be a JSON object");
  std::string name = doc.contains("name") ? doc["name"].get<std::string>() : std::move(fallback_name);
  auto grades = string_list(field(doc, "grade_domain"), "grade_domain");
  auto groups = string_list(field(doc, "groups"), "groups");
  auto focal = string_list(field(doc, "focal_groups"), "focal_groups");
  GroupTaxonomy taxonomy(groups, focal);

  const auto& school_docs = field(doc, "schools");
  if (!school_docs.is_array()) throw ParseError("schools must be an array");
  std::vector<School> schools;
  for (const auto& sd : school_docs) {
    if (!sd.is_object()) throw ParseError("school entries must be objects");
    School s;
    s.id = field(sd, "id").get<std::string>();
    s.district_id = sd.contains("district_id") ? sd["district_id"].get<std::string>() : name;
    s.capacity = count_value(field(sd, "capacity"), "capacity of '" + s.id + "'");
    if (sd.contains("grades")) {
      // Optional declaration of the grades a school currently serves; mixed
      // grade spans are not supported.
      if (string_list(sd["grades"], "grades") != grades) {
        throw ValidationError("school '" + s.id + "' serves a grade span different from the instance grade_domain");
      }
    }
    s.enrollment = Enrollment(grades.size(), groups.size());
    const auto& enr = field(sd, "enrollment");
    if (!enr.is_object()) throw ParseError("enrollment of '" + s.id + "' must be an object");
    for (auto it = enr.begin(); it != enr.end(); ++it) {
      auto g = std::find(grades.begin(), grades.end(), it.key());
      if (g == grades.end()) {
        throw ValidationError("school '" + s.id + "' enrolls grade '" + it.key() +
                              "' outside the instance grade_domain");
      }
      if (!it.value().is_object()) throw ParseError("enrollment grade entries must be objects");
      for (auto jt = it.value().begin(); jt != it.value().end(); ++jt) {
        auto k = taxonomy.index_of(jt.key());
        if (!k) throw ValidationError("school '" + s.id + "' uses unknown group '" + jt.key() + "'");
        s.enrollment.at(static_cast<std::size_t>(g - grades.begin()), *k) =
            count_value(jt.value(), "enrollment count of '" + s.id + "'");
      }
    }
    schools.push_back(std::move(s));
  }

  std::vector<std::pair<std::string, std::string>> adjacency;
  if (doc.contains("adjacency")) {
    const auto& adj = doc["adjacency"];
    if (!adj.is_array()) throw ParseError("adjacency must be an array");
    for (const auto& e : adj) {
      if (!e.is_array() || e.size() != 2 || !e[0].is_string() || !e[1].is_string()) {
        throw ParseError("adjacency entries must be [id, id] pairs");
      }
      adjacency.emplace_back(e[0].get<std::string>(), e[1].get<std::string>());
    }
  }
  return DistrictInstance::create(std::move(name), std::move(grades), std::move(taxonomy),
                                  std::move(schools), adjacency);
}

DistrictInstance load_instance(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ParseError("cannot open instance file '" + path.string() + "'");
  json doc;
  try {
    doc = json::parse(in);
  } catch (const json::exception& e) {
    throw ParseError("malformed instance file '" + path.string() + "': " + e.what());
  }
  try {
    return instance_from_json(doc, path.stem().string());
  } catch (const json::exception& e) {
    throw ParseError("malformed instance file '" + path.string() + "': " + e.what());
  }
}

json instance_to_json(const DistrictInstance& instance) {
  json doc;
  doc["name"] = instance.name();
  doc["grade_domain"] = instance.grade_labels();
  doc["groups"] = instance.taxonomy().groups();
  doc["focal_groups"] = instance.taxonomy().focal_labels();
  json schools = json::array();
  for (const auto& s : instance.schools()) {
    json enr = json::object();
    for (std::size_t g = 0; g < instance.grade_count(); ++g) {
      json row = json::object();
      for (std::size_t k = 0; k < instance.taxonomy().size(); ++k) {
        row[instance.taxonomy().groups()[k]] = s.enrollment.at(g, k);
      }
      enr[instance.grade_labels()[g]] = std::move(row);
    }
    schools.push_back({{"id", s.id},
                       {"district_id", s.district_id},
                       {"capacity", s.capacity},
                       {"enrollment", std::move(enr)}});
  }
  doc["schools"] = std::move(schools);
  json adj = json::array();
  for (const auto& [a, b] : instance.edges()) {
    adj.push_back({instance.school(a).id, instance.school(b).id});
  }
  doc["adjacency"] = std::move(adj);
  return doc;
}

}  // namespace schoolmerge
