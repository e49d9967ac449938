#pragma once

#include "flowfilt/gaussian_model.hpp"

#include <nlohmann/json.hpp>

#include <filesystem>
#include <string>
#include <vector>

namespace flowfilt {

struct LinearGaussianModel {
    GaussianPrior prior;
    LinearMeasurement meas;
};

// JSON with keys x_prior, P_g, H, R, z; matrices are row-major arrays of rows.
LinearGaussianModel parse_model(const nlohmann::json& doc);
LinearGaussianModel load_model(const std::filesystem::path& path);
nlohmann::json model_to_json(const GaussianPrior& prior, const LinearMeasurement& meas);

nlohmann::json read_json_file(const std::filesystem::path& path);

Vector json_to_vector(const nlohmann::json& value, const std::string& what);
Matrix json_to_matrix(const nlohmann::json& value, const std::string& what);
nlohmann::json to_json(const Vector& v);
nlohmann::json to_json(const Matrix& m);

// Throws ParseError naming the first key of `object` that is not in `allowed`.
void reject_unknown_keys(const nlohmann::json& object, const std::vector<std::string>& allowed,
                         const std::string& where);

/// Comma-separated, '.' decimal, header row, LF line endings, 17 significant digits.
class CsvTable {
public:
    explicit CsvTable(std::vector<std::string> header);

    void add_row(const std::vector<double>& values);
    std::string str() const;
    std::size_t rows() const { return rows_; }

private:
    std::size_t columns_;
    std::size_t rows_ = 0;
    std::string body_;
};

std::string format_double(double value);

}  // namespace flowfilt
