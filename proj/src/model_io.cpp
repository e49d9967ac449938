#include "flowfilt/model_io.hpp"

#include "flowfilt/errors.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>

namespace flowfilt {

using nlohmann::json;

namespace {

double json_number(const json& value, const std::string& what) {
    if (!value.is_number()) throw ParseError(what + ": expected a number");
    const double x = value.get<double>();
    if (!std::isfinite(x)) throw ParseError(what + ": value is not finite");
    return x;
}

const json& require_key(const json& doc, const char* key) {
    if (!doc.contains(key)) throw ParseError(std::string("model is missing '") + key + "'");
    return doc.at(key);
}

}  // namespace

Vector json_to_vector(const json& value, const std::string& what) {
    if (!value.is_array() || value.empty()) throw ParseError(what + ": expected a non-empty array of numbers");
    Vector v(static_cast<Eigen::Index>(value.size()));
    for (std::size_t i = 0; i < value.size(); ++i) {
        v(static_cast<Eigen::Index>(i)) = json_number(value[i], what);
    }
    return v;
}

Matrix json_to_matrix(const json& value, const std::string& what) {
    if (!value.is_array() || value.empty()) throw ParseError(what + ": expected a non-empty array of rows");
    const std::size_t rows = value.size();
    if (!value[0].is_array() || value[0].empty()) throw ParseError(what + ": rows must be non-empty arrays");
    const std::size_t cols = value[0].size();
    Matrix m(static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(cols));
    for (std::size_t i = 0; i < rows; ++i) {
        const json& row = value[i];
        if (!row.is_array() || row.size() != cols) {
            std::ostringstream os;
            os << what << ": row " << i << " is ragged or not an array";
            throw ParseError(os.str());
        }
        for (std::size_t j = 0; j < cols; ++j) {
            m(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = json_number(row[j], what);
        }
    }
    return m;
}

json to_json(const Vector& v) {
    json out = json::array();
    for (Eigen::Index i = 0; i < v.size(); ++i) out.push_back(v(i));
    return out;
}

json to_json(const Matrix& m) {
    json out = json::array();
    for (Eigen::Index i = 0; i < m.rows(); ++i) {
        json row = json::array();
        for (Eigen::Index j = 0; j < m.cols(); ++j) row.push_back(m(i, j));
        out.push_back(std::move(row));
    }
    return out;
}

void reject_unknown_keys(const json& object, const std::vector<std::string>& allowed, const std::string& where) {
    if (!object.is_object()) throw ParseError(where + ": expected an object");
    for (const auto& item : object.items()) {
        if (std::find(allowed.begin(), allowed.end(), item.key()) == allowed.end()) {
            throw ParseError(where + ": unknown key '" + item.key() + "'");
        }
    }
}

LinearGaussianModel parse_model(const json& doc) {
    reject_unknown_keys(doc, {"x_prior", "P_g", "H", "R", "z"}, "model");
    GaussianPrior prior(json_to_vector(require_key(doc, "x_prior"), "x_prior"),
                        json_to_matrix(require_key(doc, "P_g"), "P_g"));
    LinearMeasurement meas(json_to_matrix(require_key(doc, "H"), "H"), json_to_matrix(require_key(doc, "R"), "R"),
                           json_to_vector(require_key(doc, "z"), "z"));
    require_compatible(prior, meas);
    return {std::move(prior), std::move(meas)};
}

json read_json_file(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw ParseError("cannot open '" + path.string() + "'");
    try {
        return json::parse(in);
    } catch (const json::exception& e) {
        throw ParseError("'" + path.string() + "' is not valid JSON: " + e.what());
    }
}

LinearGaussianModel load_model(const std::filesystem::path& path) { return parse_model(read_json_file(path)); }

json model_to_json(const GaussianPrior& prior, const LinearMeasurement& meas) {
    return json{{"x_prior", to_json(prior.x_prior())},
                {"P_g", to_json(prior.P_g())},
                {"H", to_json(meas.H())},
                {"R", to_json(meas.R())},
                {"z", to_json(meas.z())}};
}

std::string format_double(double value) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.17g", value);
    return buf;
}

CsvTable::CsvTable(std::vector<std::string> header) : columns_(header.size()) {
    for (std::size_t i = 0; i < header.size(); ++i) {
        if (i) body_ += ',';
        body_ += header[i];
    }
    body_ += '\n';
}

void CsvTable::add_row(const std::vector<double>& values) {
    if (values.size() != columns_) throw DimensionError("CSV row has the wrong number of columns");
    for (std::size_t i = 0; i < values.size(); ++i) {
        if (i) body_ += ',';
        body_ += format_double(values[i]);
    }
    body_ += '\n';
    ++rows_;
}

std::string CsvTable::str() const { return body_; }

}  // namespace flowfilt
