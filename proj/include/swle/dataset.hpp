#pragma once

#include "swle/records.hpp"
#include "swle/edm.hpp"

#include <iosfwd>
#include <string>

namespace swle {

// CSV layout: y, x1..xP, trunc_lo, trunc_hi, cens_lo, cens_hi, status.
// Empty cells are unbounded endpoints; status is "exact" or "censored". Only y
// and the x columns are required.
struct ParseError : DomainError {
    using DomainError::DomainError;
};

struct DatasetReadOptions {
    bool log_response = false;
    // truncation lower bound used when the column is empty and the family is positive
    bool positive_support = false;
};

struct Dataset {
    std::vector<ObservationRecord> records;
    std::vector<std::string> covariate_names;
    std::vector<std::string> warnings;
};

Dataset read_dataset(std::istream& in, const DatasetReadOptions& opt = {});
Dataset read_dataset_file(const std::string& path, const DatasetReadOptions& opt = {});
void write_dataset(std::ostream& out, const std::vector<ObservationRecord>& records);
void write_dataset_file(const std::string& path, const std::vector<ObservationRecord>& records);

// Splits one RFC-4180 line (quoted fields with doubled quotes).
std::vector<std::string> split_csv_line(const std::string& line);

}  // namespace swle
