#include "entreg/protocol.hpp"

#include <charconv>
#include <ostream>

namespace entreg {

void check_observation(const Observation& y, double Y, std::size_t round) {
  if (!(y.norm() <= Y)) {
    throw ProtocolViolation(round, "observation outside the Y-ball at round " +
                                       std::to_string(round) + " (norm " +
                                       format_real(y.norm()) + ", Y " + format_real(Y) + ")");
  }
}

double total_loss(std::span<const RoundRecord> records) {
  double sum = 0.0;
  for (const auto& r : records) sum += r.loss;
  return sum;
}

std::string format_real(double v) {
  char buf[64];
  auto res = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, res.ptr);
}

std::string join_vector(const Vector& v) {
  std::string out;
  for (Eigen::Index i = 0; i < v.size(); ++i) {
    if (i) out += ';';
    out += format_real(v(i));
  }
  return out;
}

void write_rounds_csv(std::ostream& out, std::span<const RoundRecord> records) {
  out << "n,x,mu,y,loss,cum_loss\n";
  double cum = 0.0;
  for (const auto& r : records) {
    cum += r.loss;
    out << r.n << ',' << join_vector(r.x) << ',' << join_vector(r.mu) << ','
        << join_vector(r.y) << ',' << format_real(r.loss) << ',' << format_real(cum) << '\n';
  }
}

}  // namespace entreg
