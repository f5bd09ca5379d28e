#pragma once

#include <Eigen/Core>

#include <stdexcept>

namespace ddopt {

/// Uniform 1D grid on [a, b] with n_nodes >= 3 nodes.
struct Mesh1D {
  double a = 0.0;
  double b = 1.0;
  int n_nodes = 0;
  double h = 0.0;

  static Mesh1D uniform(double a, double b, int n_nodes) {
    if (n_nodes < 3) throw std::invalid_argument("Mesh1D: n_nodes must be >= 3");
    if (!(b > a)) throw std::invalid_argument("Mesh1D: requires b > a");
    Mesh1D m;
    m.a = a;
    m.b = b;
    m.n_nodes = n_nodes;
    m.h = (b - a) / (n_nodes - 1);
    return m;
  }

  double x(int i) const { return a + h * i; }
  double length() const { return b - a; }

  bool operator==(const Mesh1D&) const = default;
};

/// One real value per mesh node.
struct NodalField {
  Mesh1D mesh;
  Eigen::VectorXd v;

  NodalField() = default;
  explicit NodalField(const Mesh1D& m) : mesh(m), v(Eigen::VectorXd::Zero(m.n_nodes)) {}
  NodalField(const Mesh1D& m, Eigen::VectorXd values) : mesh(m), v(std::move(values)) {
    if (v.size() != mesh.n_nodes)
      throw std::invalid_argument("NodalField: value count does not match mesh");
  }

  /// Sample a function at the mesh nodes.
  template <typename F>
  static NodalField sample(const Mesh1D& m, F&& f) {
    NodalField out(m);
    for (int i = 0; i < m.n_nodes; ++i) out.v[i] = f(m.x(i));
    return out;
  }

  int size() const { return static_cast<int>(v.size()); }
  double& operator[](int i) { return v[i]; }
  double operator[](int i) const { return v[i]; }
};

}  // namespace ddopt
