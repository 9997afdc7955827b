// Domain models with collar geometry, monomial weights, and the product-of-spheres reduction.
#pragma once

#include <functional>
#include <memory>
#include <string>
#include <vector>

#include "concentra/util.hpp"

namespace concentra::geom {

enum class DomainKind { UnitBall, Ball, RoundedBox, Sdf };

struct CollarData {
    double d_x;   // distance to the boundary
    Vec3 p_x;     // boundary projection
    Vec3 nu;      // inward unit normal at p_x
    Vec3 x_bar;   // reflection of x across the boundary
};

struct BoundingBox {
    Vec3 lo;
    Vec3 hi;
};

// Immutable 3-D domain. boundary_distance > 0 inside, < 0 outside.
class DomainModel {
  public:
    static DomainModel unit_ball();
    static DomainModel ball(const Vec3& center, double radius);
    static DomainModel rounded_box(const Vec3& lo, const Vec3& hi, double corner_radius);
    static DomainModel from_sdf(std::function<double(const Vec3&)> inside_distance,
                                const BoundingBox& bbox, std::string id);

    DomainKind kind() const { return kind_; }
    const std::string& id() const { return id_; }

    double boundary_distance(const Vec3& x) const;  // signed: >0 inside
    bool contains(const Vec3& x) const { return boundary_distance(x) > 0.0; }

    // Collar queries; throws outside-domain / outside-collar.
    CollarData collar_data(const Vec3& x) const;

    double eta() const { return eta_; }
    void set_eta(double eta);
    double inradius() const { return inradius_; }
    const BoundingBox& bounding_box() const { return bbox_; }

    // Ball-specific accessors (throws if not a ball).
    const Vec3& center() const;
    double radius() const;

    // Declared reflection symmetries: planes {x_d = c}. Checked by sampling.
    void declare_reflection_symmetry(int axis, double plane_coord);
    const std::vector<std::pair<int, double>>& reflection_symmetries() const { return reflections_; }
    bool check_reflection_symmetry(int axis, double plane_coord, int samples, unsigned seed) const;

  private:
    DomainModel() = default;

    DomainKind kind_ = DomainKind::Sdf;
    std::string id_;
    Vec3 center_{0, 0, 0};
    double radius_ = 1.0;
    Vec3 box_lo_{}, box_hi_{};
    double corner_ = 0.0;
    std::function<double(const Vec3&)> sdf_;
    BoundingBox bbox_{};
    double inradius_ = 1.0;
    double eta_ = 0.2;
    std::vector<std::pair<int, double>> reflections_;
};

// 2*_{N,k} = 2(N-k)/(N-k-2); throws invalid-codimension when N-k < 3.
double critical_exponent(int N, int k);

struct SymmetrySpec {
    std::vector<int> k_list;  // k_1..k_m, each >= 1
    int N;                    // ambient dimension, N = n + sum k_i

    SymmetrySpec(std::vector<int> k_list_, int N_);
    int m() const { return int(k_list.size()); }
    int k() const;
    int n() const { return N - k(); }
};

// Strictly positive weight on the closure of the domain, with exact derivatives.
struct WeightField {
    std::string id;
    std::function<double(const Vec3&)> value;
    std::function<Vec3(const Vec3&)> gradient;
    // Hessian as row-major 3x3.
    std::function<std::array<double, 9>(const Vec3&)> hessian;
};

WeightField constant_weight();
// a(x) = x_1^{k_1} ... x_m^{k_m}; throws weight-degenerate if the domain's bounding box
// touches a coordinate hyperplane {x_i = 0}.
WeightField monomial_weight(const SymmetrySpec& spec, const DomainModel& dom);
WeightField monomial_weight(const std::vector<int>& k_list, const DomainModel& dom);

// Eq. (inv): v(y^1,...,y^m,z) = u(|y^1|,...,|y^m|,z). y has dimension N.
double lift_to_invariant(const std::function<double(std::span<const double>)>& u,
                         std::span<const double> y, const SymmetrySpec& spec,
                         const DomainModel& cross_section);

}  // namespace concentra::geom
