#ifndef SBIOS_ERRORS_HPP
#define SBIOS_ERRORS_HPP

#include <stdexcept>
#include <string>

namespace sbios {

// Exit-code mapping lives in the CLI: config=2, data=3, divergence=4.
struct config_error : std::runtime_error {
  explicit config_error(const std::string& msg) : std::runtime_error(msg) {}
};

struct data_error : std::runtime_error {
  explicit data_error(const std::string& msg) : std::runtime_error(msg) {}
};

// Malformed file contents / inconsistent dimensions.
struct schema_error : data_error {
  explicit schema_error(const std::string& msg) : data_error(msg) {}
};

struct io_error : data_error {
  explicit io_error(const std::string& msg) : data_error(msg) {}
};

struct index_error : std::logic_error {
  explicit index_error(const std::string& msg) : std::logic_error(msg) {}
};

struct domain_error : std::domain_error {
  explicit domain_error(const std::string& msg) : std::domain_error(msg) {}
};

struct divergence_error : std::runtime_error {
  explicit divergence_error(const std::string& msg) : std::runtime_error(msg) {}
};

}  // namespace sbios

#endif
