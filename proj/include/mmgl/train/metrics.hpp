#pragma once

#include "mmgl/numcore/matrix.hpp"

#include <span>
#include <vector>

namespace mmgl::train {

// Probability that a random positive outranks a random negative, ties
// counted one half. `positive` holds 0/1 flags. Throws ParameterError when
// either class is empty.
double auc_binary(std::span<const double> scores, std::span<const int> positive);

// Mean of the one-vs-rest binary AUCs over the classes that have both
// positives and negatives among `labels`. `scores` is N x C.
double auc_macro_ovr(const Matrix& scores, std::span<const int> labels);

// Binary AUC on the class-1 column for two classes, macro one-vs-rest
// otherwise.
double auc(const Matrix& scores, std::span<const int> labels);

// Fraction of rows whose argmax (first on ties) equals the label.
double accuracy(const Matrix& scores, std::span<const int> labels);

struct Summary {
    double mean = 0.0;
    double std = 0.0;  // sample standard deviation (n - 1)
    double sem = 0.0;  // std / sqrt(n)
};
Summary summarize(std::span<const double> values);

}  // namespace mmgl::train
