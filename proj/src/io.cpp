#include "pileup/io.hpp"

#include <charconv>
#include <cmath>
#include <fstream>
#include <sstream>

#include "pileup/errors.hpp"

namespace pileup {

namespace fs = std::filesystem;

std::string format_real(double v)
{
    char buf[64];
    const auto res = std::to_chars(buf, buf + sizeof buf, v, std::chars_format::general, 17);
    return std::string(buf, res.ptr);
}

fs::path sidecar_path(const fs::path& signal_path)
{
    fs::path p = signal_path;
    p.replace_extension(".json");
    return p;
}

namespace {

std::ofstream open_out(const fs::path& path)
{
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("cannot write " + path.string());
    return out;
}

std::ifstream open_in(const fs::path& path)
{
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot read " + path.string());
    return in;
}

std::string trim(std::string s)
{
    const auto first = s.find_first_not_of(" \t\r");
    if (first == std::string::npos) return {};
    const auto last = s.find_last_not_of(" \t\r");
    return s.substr(first, last - first + 1);
}

std::vector<std::string> split(const std::string& line)
{
    std::vector<std::string> out;
    std::string cell;
    std::istringstream ss(line);
    while (std::getline(ss, cell, ',')) out.push_back(trim(cell));
    if (!line.empty() && line.back() == ',') out.emplace_back();
    return out;
}

double parse_real(const std::string& s, std::size_t line)
{
    double v = 0.0;
    const auto res = std::from_chars(s.data(), s.data() + s.size(), v);
    if (s.empty() || res.ec != std::errc() || res.ptr != s.data() + s.size() || !std::isfinite(v))
        throw FormatError("not a finite number: '" + s + "'", line);
    return v;
}

std::size_t parse_index(const std::string& s, std::size_t line)
{
    std::size_t v = 0;
    const auto res = std::from_chars(s.data(), s.data() + s.size(), v);
    if (s.empty() || res.ec != std::errc() || res.ptr != s.data() + s.size())
        throw FormatError("not a sample index: '" + s + "'", line);
    return v;
}

} // namespace

void write_signal(const fs::path& path, const SampledSignal& signal)
{
    auto out = open_out(path);
    out << "index,value\n";
    for (std::size_t i = 0; i < signal.samples.size(); ++i)
        out << i << ',' << format_real(signal.samples[i]) << '\n';
    if (!out) throw IoError("write failed: " + path.string());
    write_json(sidecar_path(path), Json{{"dt", signal.grid.dt}, {"sigma", signal.noise_sigma}});
}

SampledSignal ingest_signal(const fs::path& path, double dt, double sigma)
{
    if (!(sigma >= 0.0)) throw ParameterError("noise level must be nonnegative");
    auto in = open_in(path);
    std::string line;
    std::size_t line_no = 0;
    std::vector<double> samples;
    bool header_seen = false;
    while (std::getline(in, line)) {
        ++line_no;
        line = trim(line);
        if (line.empty()) continue;
        if (!header_seen) {
            header_seen = true;
            if (line != "index,value") throw FormatError("expected header 'index,value'", line_no);
            continue;
        }
        const auto cells = split(line);
        if (cells.size() != 2) throw FormatError("expected two columns", line_no);
        const std::size_t idx = parse_index(cells[0], line_no);
        if (idx != samples.size())
            throw FormatError("sample indices must run 0, 1, 2, ... without gaps", line_no);
        samples.push_back(parse_real(cells[1], line_no));
    }
    if (!header_seen) throw FormatError("empty signal file");
    if (samples.empty()) throw FormatError("signal file has no samples");

    SampledSignal sig;
    if (samples.size() % 2 != 0) {
        samples.push_back(0.0);
        sig.padded = true;
    }
    if (samples.size() < 2) samples.resize(2, 0.0), sig.padded = true;
    sig.grid = SamplingGrid(samples.size(), dt);
    sig.samples = std::move(samples);
    sig.noise_sigma = sigma;
    return sig;
}

SampledSignal load_signal(const fs::path& path, std::optional<double> dt,
                          std::optional<double> sigma)
{
    if (!dt || !sigma) {
        const auto meta_path = sidecar_path(path);
        if (fs::exists(meta_path)) {
            const Json meta = read_json(meta_path);
            try {
                if (!dt && meta.contains("dt")) dt = meta.at("dt").get<double>();
                if (!sigma && meta.contains("sigma")) sigma = meta.at("sigma").get<double>();
            } catch (const Json::exception& e) {
                throw FormatError(meta_path.string() + ": " + e.what());
            }
        }
    }
    if (!dt) throw ParameterError("sampling period unknown: no sidecar and no --dt");
    if (!sigma) throw ParameterError("noise level unknown: no sidecar and no --sigma");
    return ingest_signal(path, *dt, *sigma);
}

void write_truth(const fs::path& path, const GroundTruth& truth)
{
    truth.validate();
    bool bank = !truth.shapes.empty() && std::holds_alternative<DictionaryShape>(truth.shapes[0]);
    for (const auto& s : truth.shapes)
        if (std::holds_alternative<DictionaryShape>(s) != bank)
            throw ParameterError("ground truth mixes bank and continuous shapes");
    auto out = open_out(path);
    out << (bank ? "t,energy,column\n" : "t,energy,theta1,theta2\n");
    for (std::size_t e = 0; e < truth.size(); ++e) {
        out << format_real(truth.arrivals[e]) << ',' << format_real(truth.energies[e]) << ',';
        if (bank) {
            out << std::get<DictionaryShape>(truth.shapes[e]).shape_index;
        } else {
            const auto& sp = std::get<ShapeParams>(truth.shapes[e]);
            out << format_real(sp.theta1) << ',' << format_real(sp.theta2);
        }
        out << '\n';
    }
    if (!out) throw IoError("write failed: " + path.string());
}

GroundTruth read_truth(const fs::path& path)
{
    auto in = open_in(path);
    std::string line;
    std::size_t line_no = 0;
    GroundTruth truth;
    int layout = 0;  // 1: bank, 2: continuous
    while (std::getline(in, line)) {
        ++line_no;
        line = trim(line);
        if (line.empty()) continue;
        if (layout == 0) {
            if (line == "t,energy,column") layout = 1;
            else if (line == "t,energy,theta1,theta2") layout = 2;
            else throw FormatError("unknown ground-truth header", line_no);
            continue;
        }
        const auto cells = split(line);
        if (cells.size() != (layout == 1 ? 3u : 4u))
            throw FormatError("wrong number of columns", line_no);
        truth.arrivals.push_back(parse_real(cells[0], line_no));
        truth.energies.push_back(parse_real(cells[1], line_no));
        if (layout == 1) truth.shapes.push_back(DictionaryShape{parse_index(cells[2], line_no)});
        else truth.shapes.push_back(ShapeParams{parse_real(cells[2], line_no), parse_real(cells[3], line_no)});
    }
    if (layout == 0) throw FormatError("empty ground-truth file");
    try {
        truth.validate();
    } catch (const ParameterError& e) {
        throw FormatError(e.what());
    }
    return truth;
}

namespace {

std::vector<double> parse_values(const Json& j, const char* key)
{
    if (!j.contains(key)) throw ParameterError(std::string("shape grid lacks '") + key + "'");
    const Json& v = j.at(key);
    try {
        if (v.is_array()) return v.get<std::vector<double>>();
        if (v.is_number()) return {v.get<double>()};
        return ParamRange{v.at("from").get<double>(), v.at("to").get<double>(),
                          v.at("step").get<double>()}
            .values();
    } catch (const Json::exception& e) {
        throw ParameterError(std::string("bad '") + key + "' range: " + e.what());
    }
}

} // namespace

ShapeGrid parse_shape_grid(const Json& j)
{
    if (!j.is_object()) throw ParameterError("shape grid must be a JSON object");
    if (!j.contains("tau") || !j.at("tau").is_number_integer() || j.at("tau").get<long>() < 1)
        throw ParameterError("shape grid needs an integer tau >= 1");
    return ShapeGrid::cartesian(parse_values(j, "theta1"), parse_values(j, "theta2"),
                                j.at("tau").get<std::size_t>());
}

ShapeGrid load_shape_grid(const fs::path& path)
{
    Json j = read_json(path);
    if (j.contains("shape_grid")) j = j.at("shape_grid");
    return parse_shape_grid(j);
}

namespace {

Json opt(const std::optional<double>& v)
{
    return v ? Json(*v) : Json(nullptr);
}

Json to_json(const Probability& p)
{
    return {{"raw", p.raw}, {"clipped", p.clipped}};
}

Json to_json(const GapBound& g)
{
    return {{"applicable", g.applicable},
            {"reason", g.reason},
            {"bracket", g.bracket},
            {"bound", g.bound},
            {"probability", to_json(g.probability)}};
}

Json to_json(const CorrelationLevel& c)
{
    return {{"empty", c.empty}, {"level", c.level}, {"radius", c.radius}};
}

} // namespace

Json to_json(const Dictionary& dict, const SparseRegressor& beta)
{
    Json active = Json::array();
    for (const auto& c : beta.entries())
        active.push_back({{"block", dict.block_of(c.column)},
                          {"shape", dict.shape_of(c.column)},
                          {"value", c.value}});
    return {{"active", active},
            {"r", beta.r},
            {"objective", beta.objective},
            {"kkt_violation", beta.kkt_violation},
            {"sweeps", beta.sweeps}};
}

Json to_json(const RateReport& report)
{
    Json j;
    j["lambda_hat"] = opt(report.lambda_hat);
    j["m_hat"] = report.events.m_hat;
    j["t_hat"] = report.events.t_hat;
    j["lambda_std"] = opt(report.lambda_std);
    j["lambda_opt"] = opt(report.lambda_opt);
    j["lambda_c"] = opt(report.lambda_c);
    j["active_blocks"] = report.events.active_blocks;
    j["r"] = report.events.r;
    j["eta"] = report.events.eta;
    if (!report.lambda_hat_note.empty()) j["note"] = report.lambda_hat_note;
    return j;
}

Json to_json(const BoundReport& rep)
{
    const auto& in = rep.inputs;
    Json j;
    j["inputs"] = {{"e_min", in.e_min}, {"e_max", in.e_max}, {"sigma", in.sigma},
                   {"alpha", in.alpha}, {"g_min", in.g_min}, {"g_mass", in.g_mass},
                   {"tau", in.tau},     {"p", in.p},         {"n", in.n},
                   {"dt", in.dt},       {"r", in.r},         {"eta", in.eta}};
    j["eta_theory"] = opt(rep.eta_theory);
    j["r_admissible"] = {{"applicable", rep.admissibility.applicable},
                         {"holds", rep.admissibility.holds},
                         {"margin", rep.admissibility.margin}};
    j["support_probabilities"] = {{"applicable", rep.prop2.applicable},
                                  {"forward", to_json(rep.prop2.forward)},
                                  {"converse", to_json(rep.prop2.converse)}};
    j["rho_r"] = to_json(rep.rho);
    j["mu"] = to_json(rep.mu);
    j["upper_gap"] = to_json(rep.upper_gap);
    j["lower_gap"] = to_json(rep.lower_gap);
    return j;
}

Json read_json(const fs::path& path)
{
    auto in = open_in(path);
    try {
        return Json::parse(in);
    } catch (const Json::parse_error& e) {
        throw FormatError(path.string() + ": " + e.what());
    }
}

void write_json(const fs::path& path, const Json& j)
{
    auto out = open_out(path);
    out << j.dump(2) << '\n';
    if (!out) throw IoError("write failed: " + path.string());
}

} // namespace pileup
