#pragma once

#include <array>
#include <cstdint>
#include <limits>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace arc {

/// Optional constraint families layered on top of the capacitated base
/// problem. The enumerator order is the indicator order (B, MB, O, TW, L).
enum class Attribute : int { B = 0, MB = 1, O = 2, TW = 3, L = 4 };

inline constexpr std::array<Attribute, 5> kAllAttributes = {
    Attribute::B, Attribute::MB, Attribute::O, Attribute::TW, Attribute::L};

std::string_view attribute_name(Attribute a);
/// Case-insensitive; throws std::invalid_argument on anything else.
Attribute attribute_from_name(std::string_view name);

struct AttributeIndicator {
  bool b = false;
  bool mb = false;
  bool o = false;
  bool tw = false;
  bool l = false;

  bool has(Attribute a) const;
  void set(Attribute a, bool value);
  /// Active attributes in indicator order.
  std::vector<Attribute> active() const;
  std::array<double, 5> as_features() const;

  friend bool operator==(const AttributeIndicator&, const AttributeIndicator&) = default;
};

/// The 24 variant names in catalog order: the 16 variants without mixed
/// backhaul first, then the 8 mixed-backhaul ones.
const std::vector<std::string>& variant_catalog();

/// Throws std::invalid_argument listing the catalog for unknown names.
AttributeIndicator variant_from_name(std::string_view name);
std::string name_of(const AttributeIndicator& indicator);

/// Named variant sets: "all16", "zeroshot7", "heldout9", "mb8", "all24".
/// A comma-separated list of variant names is accepted as well.
std::vector<std::string> resolve_variant_set(std::string_view spec);
const std::vector<std::string>& preset_names();

/// Horizon-relative value written into features when a window is unbounded.
inline constexpr double kInfinity = std::numeric_limits<double>::infinity();

/// Duration-limit feature used when L is inactive. Larger than any limit the
/// generator produces and than any route length in the unit square.
inline constexpr double kUnboundedDurationFeature = 5.0;

struct NodeFeatures {
  double x = 0.0;
  double y = 0.0;
  // Raw integer demands; exactly one of them is nonzero for a customer.
  int demand_linehaul = 0;
  int demand_backhaul = 0;
  // Demands as a fraction of vehicle capacity.
  double ql = 0.0;
  double qb = 0.0;
  double e = 0.0;
  double l = kInfinity;
  double s = 0.0;

  friend bool operator==(const NodeFeatures&, const NodeFeatures&) = default;
};

struct GlobalFeatures {
  bool open = false;
  double duration_limit = kInfinity;  // finite iff L is active
  bool mixed = false;
  double horizon = 4.6;  // depot window close T
  double capacity = 1.0;  // raw Q

  friend bool operator==(const GlobalFeatures&, const GlobalFeatures&) = default;
};

struct Instance {
  int n = 0;
  NodeFeatures depot;
  std::vector<NodeFeatures> customers;
  GlobalFeatures globals;
  AttributeIndicator indicator;
  std::string variant_name;
  std::uint64_t seed = 0;

  /// Node i with 0 the depot and 1..n the customers.
  const NodeFeatures& node(int i) const { return i == 0 ? depot : customers[i - 1]; }

  friend bool operator==(const Instance&, const Instance&) = default;
};

/// Throws std::invalid_argument describing the first broken invariant.
void check_instance(const Instance& x);

struct GenerationConfig {
  int n = 50;
  std::string variant_name = "CVRP";
  std::uint64_t seed = 0;
  /// Raw vehicle capacity; 0 selects the size-dependent default.
  double capacity = 0.0;
  double horizon = 4.6;
  int demand_min = 1;
  int demand_max = 9;
  double backhaul_fraction = 0.2;
  double service_time_min = 0.15;
  double service_time_max = 0.18;
  double window_width_min = 0.18;
  double window_width_max = 0.2;
  double duration_limit = 3.0;
};

/// Default capacity for a graph size: 20 up to n=10, 30 up to 20, 40 up to 50,
/// 50 beyond.
double default_capacity(int n);

Instance generate_instance(const GenerationConfig& cfg);

/// Copy of x with attribute a switched off. Identity when a is inactive.
Instance mask_attribute(const Instance& x, Attribute a);

class DistanceMatrix {
 public:
  DistanceMatrix() = default;
  explicit DistanceMatrix(const Instance& x);

  int size() const { return size_; }
  double operator()(int i, int j) const { return data_[static_cast<std::size_t>(i) * size_ + j]; }

 private:
  int size_ = 0;
  std::vector<double> data_;
};

DistanceMatrix distance_matrix(const Instance& x);

double euclidean(double x0, double y0, double x1, double y1);

}  // namespace arc
