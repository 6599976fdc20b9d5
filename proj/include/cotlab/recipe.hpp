#pragma once

#include <json.hpp>

#include <cstdint>
#include <optional>
#include <string>

namespace cotlab {

// Power-law exponent of a CoT recipe: a non-negative real or infinity.
// Infinity is a distinguished state rather than a float so that u^inf never
// goes through pow().
class Exponent {
public:
    // Throws ConfigError for negative or non-finite values.
    explicit Exponent(double value);
    static Exponent infinity() noexcept { return Exponent(); }

    bool is_infinite() const noexcept { return infinite_; }
    // Only meaningful when finite.
    double value() const noexcept { return value_; }

    // u^alpha for u in [0, 1], with 0^0 = 1 and u^inf = 0 for u < 1.
    double power(double u) const noexcept;

    // "inf" or the shortest round-trip decimal.
    std::string to_string() const;
    // Accepts "inf", "infinity", or a decimal number.
    static Exponent parse(const std::string& text);

    bool operator==(const Exponent&) const = default;

private:
    Exponent() noexcept : value_(0.0), infinite_(true) {}
    double value_;
    bool infinite_;
};

// r_CoT(j) = clamp(a * (j / T)^alpha + b, 0, 1).
struct Recipe {
    Exponent alpha{0.0};
    double a = 1.0;
    double b = 0.0;

    bool is_pure_power() const noexcept { return a == 1.0 && b == 0.0; }
    bool operator==(const Recipe&) const = default;
};

// Throws InputError unless j < T.
double r_cot(const Recipe& recipe, std::uint64_t j, std::uint64_t T);

struct CotExampleCount {
    double exact = 0.0;   // K * sum_{j<T} (j/T)^alpha by direct summation
    double approx = 0.0;  // Euler-Maclaurin closed form
};

// Requires a = 1, b = 0 and T >= 2 (InputError otherwise).
CotExampleCount expected_cot_examples(const Recipe& recipe, std::uint64_t K, std::uint64_t T);

struct BudgetParams {
    std::uint64_t n = 0;
    std::uint64_t c = 0;
    std::uint64_t k = 0;
    std::uint64_t t = 0;
    Recipe recipe;
};

struct BudgetReport {
    BudgetParams params;
    double expected_cot_examples_exact = 0.0;
    // Only defined for the pure power law (a = 1, b = 0).
    std::optional<double> expected_cot_examples_approx;
    double expected_standard_examples = 0.0;
    double expected_tokens = 0.0;
};

// Expected dataset size in tokens: one bos per sequence, N + C + 7 per CoT
// example, N + 6 per standard example. The CoT count is the exact sum of the
// clamped schedule, so any (a, b) is accepted.
BudgetReport expected_tokens(const Recipe& recipe, std::uint64_t N, std::uint64_t C,
                             std::uint64_t K, std::uint64_t T);

nlohmann::ordered_json recipe_to_json(const Recipe& r);
Recipe recipe_from_json(const nlohmann::json& j);
nlohmann::ordered_json budget_to_json(const BudgetReport& report);

}  // namespace cotlab
