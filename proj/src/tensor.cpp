#include "dcnn/tensor.hpp"

#include <cmath>
#include <cstring>
#include <fstream>
#include <limits>
#include <sstream>
#include <thread>
#include <utility>

#include "dcnn/errors.hpp"
#include "dcnn/parallel.hpp"

namespace dcnn {

Shape::Shape(std::initializer_list<std::size_t> dims)
    : dims_(dims.begin(), dims.end()) {
  validate();
}

Shape::Shape(std::vector<std::size_t> dims) : dims_(std::move(dims)) {
  validate();
}

void Shape::validate() {
  elements_ = 1;
  for (std::size_t d : dims_) {
    if (d == 0) throw ShapeError("shape extent must be >= 1, got 0 in " + str());
    if (elements_ > std::numeric_limits<std::size_t>::max() / d)
      throw ShapeError("shape element count overflows 64 bits: " + str());
    elements_ *= d;
  }
}

std::string Shape::str() const {
  std::ostringstream os;
  os << "[";
  for (std::size_t i = 0; i < dims_.size(); ++i) {
    if (i) os << ", ";
    os << dims_[i];
  }
  os << "]";
  return os.str();
}

Tensor Tensor::zeros(Shape shape) {
  std::vector<float> data(shape.elements(), 0.0f);
  return Tensor(std::move(shape), std::move(data));
}

Tensor Tensor::full(Shape shape, float value) {
  std::vector<float> data(shape.elements(), value);
  return Tensor(std::move(shape), std::move(data));
}

Tensor Tensor::from_data(Shape shape, std::vector<float> data) {
  if (data.size() != shape.elements())
    throw ShapeError("data length " + std::to_string(data.size()) +
                     " does not match shape " + shape.str());
  return Tensor(std::move(shape), std::move(data));
}

Tensor fill_normal(Rng& rng, Shape shape, float mean, float stddev) {
  if (stddev < 0.0f) throw ArgumentError("fill_normal: stddev must be >= 0");
  std::vector<float> data(shape.elements());
  for (float& v : data)
    v = static_cast<float>(mean + stddev * rng.next_normal());
  return Tensor::from_data(std::move(shape), std::move(data));
}

Tensor matmul(const Tensor& a, const Tensor& b) {
  if (a.shape().rank() != 2 || b.shape().rank() != 2)
    throw ShapeError("matmul expects rank-2 operands, got " + a.shape().str() +
                     " x " + b.shape().str());
  const std::size_t m = a.shape()[0];
  const std::size_t k = a.shape()[1];
  const std::size_t n = b.shape()[1];
  if (b.shape()[0] != k)
    throw ShapeError("matmul inner dimensions disagree: " + a.shape().str() +
                     " x " + b.shape().str());

  Tensor out = Tensor::zeros(Shape{m, n});
  const float* pa = a.data();
  const float* pb = b.data();
  float* po = out.data();

  // i-k-j with one float64 accumulator row per output row. The k order is
  // fixed per element, so any row partition gives bitwise-identical output.
  parallel_for(m, /*grain=*/(4u << 20) / (k * n + 1) + 1,
               [&](std::size_t row_begin, std::size_t row_end) {
                 std::vector<double> acc(n);
                 for (std::size_t i = row_begin; i < row_end; ++i) {
                   std::fill(acc.begin(), acc.end(), 0.0);
                   const float* arow = pa + i * k;
                   for (std::size_t kk = 0; kk < k; ++kk) {
                     const double av = static_cast<double>(arow[kk]);
                     const float* brow = pb + kk * n;
                     for (std::size_t j = 0; j < n; ++j)
                       acc[j] += av * static_cast<double>(brow[j]);
                   }
                   float* orow = po + i * n;
                   for (std::size_t j = 0; j < n; ++j)
                     orow[j] = static_cast<float>(acc[j]);
                 }
               });
  return out;
}

namespace {

void check_same_shape(const Tensor& a, const Tensor& b, const char* op) {
  if (a.shape() != b.shape())
    throw ShapeError(std::string(op) + ": shape mismatch " + a.shape().str() +
                     " vs " + b.shape().str());
}

}  // namespace

Tensor add(const Tensor& a, const Tensor& b) {
  check_same_shape(a, b, "add");
  Tensor out = Tensor::zeros(a.shape());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a[i] + b[i];
  return out;
}

Tensor sub(const Tensor& a, const Tensor& b) {
  check_same_shape(a, b, "sub");
  Tensor out = Tensor::zeros(a.shape());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a[i] - b[i];
  return out;
}

Tensor scale(const Tensor& t, float factor) {
  Tensor out = Tensor::zeros(t.shape());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = t[i] * factor;
  return out;
}

Tensor map_elementwise(const Tensor& t, const std::function<float(float)>& f) {
  Tensor out = Tensor::zeros(t.shape());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = f(t[i]);
  return out;
}

bool all_finite(const Tensor& t) {
  for (std::size_t i = 0; i < t.size(); ++i)
    if (!std::isfinite(t[i])) return false;
  return true;
}

namespace {

constexpr char kTnsrMagic[4] = {'T', 'N', 'S', '1'};

void write_u32_le(std::ostream& out, std::uint32_t v) {
  unsigned char b[4] = {static_cast<unsigned char>(v & 0xff),
                        static_cast<unsigned char>((v >> 8) & 0xff),
                        static_cast<unsigned char>((v >> 16) & 0xff),
                        static_cast<unsigned char>((v >> 24) & 0xff)};
  out.write(reinterpret_cast<const char*>(b), 4);
}

std::uint32_t read_u32_le(std::istream& in) {
  unsigned char b[4];
  in.read(reinterpret_cast<char*>(b), 4);
  if (!in) throw FormatError("TNSR: truncated stream while reading u32");
  return static_cast<std::uint32_t>(b[0]) |
         (static_cast<std::uint32_t>(b[1]) << 8) |
         (static_cast<std::uint32_t>(b[2]) << 16) |
         (static_cast<std::uint32_t>(b[3]) << 24);
}

}  // namespace

void save_tnsr(const Tensor& t, std::ostream& out) {
  out.write(kTnsrMagic, 4);
  write_u32_le(out, static_cast<std::uint32_t>(t.shape().rank()));
  for (std::size_t d : t.shape().dims()) {
    if (d > std::numeric_limits<std::uint32_t>::max())
      throw FormatError("TNSR: extent exceeds u32: " + t.shape().str());
    write_u32_le(out, static_cast<std::uint32_t>(d));
  }
  for (std::size_t i = 0; i < t.size(); ++i) {
    std::uint32_t bits;
    const float v = t[i];
    std::memcpy(&bits, &v, 4);
    write_u32_le(out, bits);
  }
  if (!out) throw IoError("TNSR: write failed");
}

Tensor load_tnsr(std::istream& in) {
  char magic[4];
  in.read(magic, 4);
  if (!in || std::memcmp(magic, kTnsrMagic, 4) != 0)
    throw FormatError("TNSR: bad magic, expected \"TNS1\"");
  const std::uint32_t rank = read_u32_le(in);
  if (rank > 8) throw FormatError("TNSR: implausible rank " + std::to_string(rank));
  std::vector<std::size_t> dims(rank);
  for (auto& d : dims) d = read_u32_le(in);
  Shape shape(std::move(dims));
  std::vector<float> data(shape.elements());
  for (float& v : data) {
    const std::uint32_t bits = read_u32_le(in);
    std::memcpy(&v, &bits, 4);
  }
  return Tensor::from_data(std::move(shape), std::move(data));
}

void save_tnsr_file(const Tensor& t, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot open for writing: " + path);
  save_tnsr(t, out);
}

Tensor load_tnsr_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open for reading: " + path);
  return load_tnsr(in);
}

}  // namespace dcnn
