#include "spiopt/parameters.hpp"

#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <iterator>

#include "spiopt/io_util.hpp"

namespace spiopt {

Parameter& ParameterSet::add(const std::string& name, Tensor value)
{
    if (params_.count(name)) throw std::invalid_argument("parameter '" + name + "' already registered");
    Parameter p;
    p.grad = Tensor::zeros(value.shape);
    p.first_moment = Tensor::zeros(value.shape);
    p.second_moment = Tensor::zeros(value.shape);
    p.value = std::move(value);
    return params_.emplace(name, std::move(p)).first->second;
}

void ParameterSet::remove(const std::string& name)
{
    params_.erase(name);
}

Parameter& ParameterSet::at(const std::string& name)
{
    auto it = params_.find(name);
    if (it == params_.end()) throw std::out_of_range("unknown parameter '" + name + "'");
    return it->second;
}

const Parameter& ParameterSet::at(const std::string& name) const
{
    auto it = params_.find(name);
    if (it == params_.end()) throw std::out_of_range("unknown parameter '" + name + "'");
    return it->second;
}

std::size_t ParameterSet::scalar_count() const
{
    std::size_t n = 0;
    for (const auto& [name, p] : params_) n += p.value.size();
    return n;
}

std::vector<std::string> ParameterSet::names() const
{
    std::vector<std::string> out;
    out.reserve(params_.size());
    for (const auto& [name, p] : params_) out.push_back(name);
    return out;
}

void ParameterSet::zero_grad()
{
    for (auto& [name, p] : params_) std::fill(p.grad.values.begin(), p.grad.values.end(), 0.0);
    gradients_pending_ = false;
}

ParameterSet ParameterSet::clone_values() const
{
    ParameterSet out;
    for (const auto& [name, p] : params_) out.add(name, p.value);
    return out;
}

void adam_step(ParameterSet& params, double learning_rate)
{
    for (const auto& [name, p] : params.params_)
        if (!p.grad.all_finite()) throw NumericError("adam_step: non-finite gradient in parameter '" + name + "'");

    ++params.step_;
    const double t = static_cast<double>(params.step_);
    const double correction1 = 1.0 - std::pow(AdamConstants::beta1, t);
    const double correction2 = 1.0 - std::pow(AdamConstants::beta2, t);

    for (auto& [name, p] : params.params_) {
        auto& m = p.first_moment.values;
        auto& v = p.second_moment.values;
        auto& g = p.grad.values;
        auto& w = p.value.values;
        for (std::size_t i = 0; i < w.size(); ++i) {
            m[i] = AdamConstants::beta1 * m[i] + (1.0 - AdamConstants::beta1) * g[i];
            v[i] = AdamConstants::beta2 * v[i] + (1.0 - AdamConstants::beta2) * g[i] * g[i];
            const double m_hat = m[i] / correction1;
            const double v_hat = v[i] / correction2;
            w[i] -= learning_rate * m_hat / (std::sqrt(v_hat) + AdamConstants::epsilon);
            g[i] = 0.0;
        }
    }
    params.gradients_pending_ = false;
}

Tensor glorot_uniform(Shape shape, std::size_t fan_in, std::size_t fan_out, Rng& rng)
{
    Tensor t(std::move(shape));
    const double a = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
    for (auto& x : t.values) x = rng.uniform(-a, a);
    return t;
}

namespace {

void put_u64(std::vector<std::uint8_t>& out, std::uint64_t v)
{
    for (int i = 0; i < 8; ++i) out.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
}

void put_f64(std::vector<std::uint8_t>& out, double v)
{
    put_u64(out, std::bit_cast<std::uint64_t>(v));
}

class Reader {
public:
    explicit Reader(const std::vector<std::uint8_t>& bytes) : bytes_(bytes) {}

    bool done() const { return pos_ == bytes_.size(); }

    std::uint64_t u64()
    {
        need(8);
        std::uint64_t v = 0;
        for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(bytes_[pos_ + i]) << (8 * i);
        pos_ += 8;
        return v;
    }

    double f64() { return std::bit_cast<double>(u64()); }

    std::string str(std::size_t n)
    {
        need(n);
        std::string s(reinterpret_cast<const char*>(bytes_.data() + pos_), n);
        pos_ += n;
        return s;
    }

    void need(std::size_t n) const
    {
        if (bytes_.size() - pos_ < n)
            throw FormatError("tensor container truncated at byte " + std::to_string(pos_));
    }

    std::size_t remaining() const { return bytes_.size() - pos_; }

private:
    const std::vector<std::uint8_t>& bytes_;
    std::size_t pos_ = 0;
};

}  // namespace

std::vector<std::uint8_t> encode_tensors(const TensorMap& tensors)
{
    std::vector<std::uint8_t> out(std::begin(kContainerMagic), std::end(kContainerMagic));
    for (const auto& [name, t] : tensors) {
        put_u64(out, name.size());
        out.insert(out.end(), name.begin(), name.end());
        put_u64(out, t.shape.size());
        for (auto d : t.shape) put_u64(out, d);
        for (double v : t.values) put_f64(out, v);
    }
    return out;
}

TensorMap decode_tensors(const std::vector<std::uint8_t>& bytes)
{
    if (bytes.size() < sizeof kContainerMagic || std::memcmp(bytes.data(), kContainerMagic, sizeof kContainerMagic) != 0)
        throw FormatError("tensor container: bad magic");
    std::vector<std::uint8_t> body(bytes.begin() + sizeof kContainerMagic, bytes.end());
    Reader in(body);
    TensorMap out;
    while (!in.done()) {
        const auto name_len = in.u64();
        in.need(name_len);
        std::string name = in.str(name_len);
        const auto rank = in.u64();
        if (rank > 8) throw FormatError("tensor container: implausible rank for '" + name + "'");
        Shape shape;
        for (std::uint64_t i = 0; i < rank; ++i) shape.push_back(in.u64());
        const auto count = shape_size(shape);
        if (count == 0 || in.remaining() / 8 < count)
            throw FormatError("tensor container: truncated values for '" + name + "'");
        std::vector<double> values(count);
        for (auto& v : values) v = in.f64();
        if (!out.emplace(name, Tensor(std::move(shape), std::move(values))).second)
            throw FormatError("tensor container: duplicate record '" + name + "'");
    }
    return out;
}

void save_tensors(const std::filesystem::path& path, const TensorMap& tensors)
{
    const auto bytes = encode_tensors(tensors);
    write_file_atomic(path, std::string_view(reinterpret_cast<const char*>(bytes.data()), bytes.size()));
}

TensorMap load_tensors(const std::filesystem::path& path)
{
    std::ifstream in(path, std::ios::binary);
    if (!in) throw FormatError("cannot open tensor container " + path.string());
    std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    return decode_tensors(bytes);
}

TensorMap parameter_values(const ParameterSet& params, const std::string& prefix)
{
    TensorMap out;
    for (const auto& [name, p] : params) out.emplace(prefix + name, p.value);
    return out;
}

ParameterSet parameters_from(const TensorMap& tensors, const std::string& prefix)
{
    ParameterSet out;
    for (const auto& [name, t] : tensors)
        if (name.starts_with(prefix)) out.add(name, t);
    return out;
}

}  // namespace spiopt
