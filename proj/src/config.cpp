#include "spiopt/config.hpp"

#include <charconv>
#include <sstream>

#include "spiopt/io_util.hpp"

namespace spiopt {

namespace {

std::string trim(std::string_view s)
{
    const auto b = s.find_first_not_of(" \t\r");
    if (b == std::string_view::npos) return {};
    const auto e = s.find_last_not_of(" \t\r");
    return std::string(s.substr(b, e - b + 1));
}

double to_double(const std::string& key, const std::string& v)
{
    double out = 0.0;
    auto [p, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
    if (ec != std::errc() || p != v.data() + v.size())
        throw ConfigError(key, "config key '" + key + "': '" + v + "' is not a number");
    return out;
}

std::uint64_t to_uint(const std::string& key, const std::string& v)
{
    std::uint64_t out = 0;
    auto [p, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
    if (ec != std::errc() || p != v.data() + v.size())
        throw ConfigError(key, "config key '" + key + "': '" + v + "' is not a non-negative integer");
    return out;
}

bool to_bool(const std::string& key, const std::string& v)
{
    if (v == "true" || v == "1" || v == "yes") return true;
    if (v == "false" || v == "0" || v == "no") return false;
    throw ConfigError(key, "config key '" + key + "': '" + v + "' is not a boolean");
}

std::vector<std::string> split_list(const std::string& v)
{
    std::vector<std::string> out;
    std::stringstream ss(v);
    for (std::string item; std::getline(ss, item, ',');) {
        item = trim(item);
        if (!item.empty()) out.push_back(item);
    }
    return out;
}

std::vector<double> to_doubles(const std::string& key, const std::string& v)
{
    std::vector<double> out;
    for (const auto& item : split_list(v)) out.push_back(to_double(key, item));
    if (out.empty()) throw ConfigError(key, "config key '" + key + "': empty list");
    return out;
}

template <typename T>
std::string join(const std::vector<T>& v)
{
    std::string out;
    for (std::size_t i = 0; i < v.size(); ++i) {
        if (i) out += ',';
        if constexpr (std::is_same_v<T, double>)
            out += format_double(v[i]);
        else
            out += v[i];
    }
    return out;
}

}  // namespace

std::vector<std::pair<std::string, std::string>> parse_key_values(std::string_view text)
{
    std::vector<std::pair<std::string, std::string>> out;
    std::size_t line_no = 0;
    while (!text.empty()) {
        ++line_no;
        const auto nl = text.find('\n');
        std::string_view line = text.substr(0, nl);
        text = nl == std::string_view::npos ? std::string_view{} : text.substr(nl + 1);
        if (auto hash = line.find('#'); hash != std::string_view::npos) line = line.substr(0, hash);
        const std::string stripped = trim(line);
        if (stripped.empty()) continue;
        const auto eq = stripped.find('=');
        if (eq == std::string::npos)
            throw ConfigError("line" + std::to_string(line_no), "config line " + std::to_string(line_no) + ": expected key=value");
        out.emplace_back(trim(stripped.substr(0, eq)), trim(stripped.substr(eq + 1)));
    }
    return out;
}

bool set_train_key(TrainConfig& c, const std::string& key, const std::string& value)
{
    if (key == "task") {
        try {
            c.task = parse_task(value);
        } catch (const std::invalid_argument& e) {
            throw ConfigError(key, e.what());
        }
    } else if (key == "lambda") {
        c.stage_one_rate = to_double(key, value);
    } else if (key == "epochs") {
        c.epochs = to_uint(key, value);
    } else if (key == "fine_tune_epochs") {
        c.fine_tune_epochs = to_uint(key, value);
    } else if (key == "batch_size") {
        c.batch_size = to_uint(key, value);
    } else if (key == "learning_rate") {
        c.learning_rate = to_double(key, value);
    } else if (key == "bank_learning_rate") {
        c.bank_learning_rate = to_double(key, value);
    } else if (key == "seed") {
        c.seed = to_uint(key, value);
    } else if (key == "reduction") {
        c.reduction = to_uint(key, value);
    } else if (key == "channels") {
        c.channels = to_uint(key, value);
    } else if (key == "hidden") {
        c.hidden = to_uint(key, value);
    } else if (key == "noise_sigma") {
        c.noise_sigma = to_double(key, value);
    } else {
        return false;
    }
    return true;
}

TrainConfig parse_train_config(std::string_view text)
{
    TrainConfig c;
    for (const auto& [k, v] : parse_key_values(text))
        if (!set_train_key(c, k, v)) throw ConfigError(k, "unknown config key '" + k + "'");
    return c;
}

std::string config_text(const TrainConfig& c)
{
    std::ostringstream out;
    out << "task=" << to_string(c.task) << '\n'
        << "lambda=" << format_double(c.stage_one_rate) << '\n'
        << "epochs=" << c.epochs << '\n'
        << "fine_tune_epochs=" << c.fine_tune_epochs << '\n'
        << "batch_size=" << c.batch_size << '\n'
        << "learning_rate=" << format_double(c.learning_rate) << '\n'
        << "bank_learning_rate=" << format_double(c.bank_learning_rate) << '\n'
        << "seed=" << c.seed << '\n'
        << "reduction=" << c.reduction << '\n'
        << "channels=" << c.channels << '\n'
        << "hidden=" << c.hidden << '\n'
        << "noise_sigma=" << format_double(c.noise_sigma) << '\n';
    return out.str();
}

std::uint64_t config_hash(const TrainConfig& config)
{
    return fnv1a(config_text(config));
}

void set_run_key(RunConfig& c, const std::string& key, const std::string& value)
{
    if (set_train_key(c.train, key, value)) return;
    if (key == "synthetic")
        c.data.synthetic = to_bool(key, value);
    else if (key == "dataset_dir")
        c.data.dataset_dir = value;
    else if (key == "train_subset")
        c.data.train_subset = to_uint(key, value);
    else if (key == "test_subset")
        c.data.test_subset = to_uint(key, value);
    else if (key == "synthetic_train")
        c.data.synthetic_train = to_uint(key, value);
    else if (key == "synthetic_test")
        c.data.synthetic_test = to_uint(key, value);
    else if (key == "rates")
        c.rates = to_doubles(key, value);
    else if (key == "lambdas")
        c.lambdas = to_doubles(key, value);
    else if (key == "strategies") {
        c.strategies = split_list(value);
        for (const auto& s : c.strategies)
            if (s != "learned" && s != "random" && s != "hadamard")
                throw ConfigError(key, "config key 'strategies': unknown strategy '" + s + "'");
    } else if (key == "band_patterns")
        c.band_patterns = to_uint(key, value);
    else if (key == "band_width")
        c.band_width = to_uint(key, value);
    else
        throw ConfigError(key, "unknown config key '" + key + "'");
}

RunConfig parse_run_config(std::string_view text)
{
    RunConfig c;
    for (const auto& [k, v] : parse_key_values(text)) set_run_key(c, k, v);
    return c;
}

std::string run_config_text(const RunConfig& c)
{
    std::ostringstream out;
    out << config_text(c.train) << "synthetic=" << (c.data.synthetic ? "true" : "false") << '\n'
        << "dataset_dir=" << c.data.dataset_dir.string() << '\n'
        << "train_subset=" << c.data.train_subset << '\n'
        << "test_subset=" << c.data.test_subset << '\n'
        << "synthetic_train=" << c.data.synthetic_train << '\n'
        << "synthetic_test=" << c.data.synthetic_test << '\n'
        << "rates=" << join(c.rates) << '\n'
        << "lambdas=" << join(c.lambdas) << '\n'
        << "strategies=" << join(c.strategies) << '\n'
        << "band_patterns=" << c.band_patterns << '\n'
        << "band_width=" << c.band_width << '\n';
    return out.str();
}

DataSplits load_data(const DataConfig& data, std::uint64_t seed)
{
    if (data.synthetic)
        return {synthetic_dataset(seed, data.synthetic_train, Split::Train),
                synthetic_dataset(seed, data.synthetic_test, Split::Test)};
    return {head(load_mnist(data.dataset_dir, Split::Train), data.train_subset),
            head(load_mnist(data.dataset_dir, Split::Test), data.test_subset)};
}

}  // namespace spiopt
