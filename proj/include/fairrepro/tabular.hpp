#pragma once

// Typed tabular data: schemas, datasets, the numeric encoding that feeds every
// network, and column alignment between a base schema and a target schema.

#include <algorithm>
#include <array>
#include <cctype>
#include <charconv>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Dense>
#include <json.hpp>

#include "common.hpp"

namespace fairrepro {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;

enum class ColumnKind { categorical, numeric };

struct ColumnSpec {
    std::string name;
    ColumnKind kind = ColumnKind::numeric;
    std::vector<std::string> categories; // categorical only
    double min = 0.0;                    // numeric only
    double max = 1.0;

    static ColumnSpec categorical(std::string name, std::vector<std::string> categories) {
        ColumnSpec c;
        c.name = std::move(name);
        c.kind = ColumnKind::categorical;
        c.categories = std::move(categories);
        return c;
    }
    static ColumnSpec numeric(std::string name, double min, double max) {
        ColumnSpec c;
        c.name = std::move(name);
        c.kind = ColumnKind::numeric;
        c.min = min;
        c.max = max;
        return c;
    }

    std::size_t cardinality() const { return categories.size(); }
    bool is_categorical() const { return kind == ColumnKind::categorical; }

    bool same_kind(const ColumnSpec& other) const {
        if (kind != other.kind) return false;
        if (is_categorical()) return categories == other.categories;
        return min == other.min && max == other.max;
    }

    void validate() const {
        if (name.empty()) throw Error("column with empty name");
        if (is_categorical()) {
            if (categories.size() < 2)
                throw Error("categorical column '" + name + "' needs at least 2 categories");
            std::set<std::string> unique(categories.begin(), categories.end());
            if (unique.size() != categories.size())
                throw Error("categorical column '" + name + "' has duplicate categories");
        } else if (!(min < max)) {
            throw Error("numeric column '" + name + "' needs min < max");
        }
    }

    std::optional<std::size_t> category_index(std::string_view label) const {
        for (std::size_t i = 0; i < categories.size(); ++i)
            if (categories[i] == label) return i;
        return std::nullopt;
    }
};

class Schema {
public:
    Schema() = default;
    Schema(std::vector<ColumnSpec> columns, std::string label_column, std::string protected_column)
        : columns_(std::move(columns)), label_(std::move(label_column)),
          protected_(std::move(protected_column)) {
        validate();
    }

    const std::vector<ColumnSpec>& columns() const { return columns_; }
    const std::string& label_column() const { return label_; }
    const std::string& protected_column() const { return protected_; }
    std::size_t size() const { return columns_.size(); }

    std::optional<std::size_t> find(std::string_view name) const {
        for (std::size_t i = 0; i < columns_.size(); ++i)
            if (columns_[i].name == name) return i;
        return std::nullopt;
    }
    std::size_t index_of(std::string_view name) const {
        auto i = find(name);
        if (!i) throw Error("unknown column '" + std::string(name) + "'");
        return *i;
    }
    const ColumnSpec& column(std::string_view name) const { return columns_[index_of(name)]; }

    std::size_t label_index() const { return index_of(label_); }
    std::size_t protected_index() const { return index_of(protected_); }

    /// Columns other than the label and protected ones, in schema order.
    std::vector<std::size_t> feature_indices() const {
        std::vector<std::size_t> out;
        for (std::size_t i = 0; i < columns_.size(); ++i)
            if (columns_[i].name != label_ && columns_[i].name != protected_) out.push_back(i);
        return out;
    }

    /// Same columns, different designation of label/protected.
    Schema with_roles(std::string label_column, std::string protected_column) const {
        return Schema(columns_, std::move(label_column), std::move(protected_column));
    }

    /// Keeps only the named columns, in this schema's order.
    Schema restricted_to(const std::vector<std::string>& names) const {
        std::vector<ColumnSpec> kept;
        for (const auto& c : columns_)
            if (std::find(names.begin(), names.end(), c.name) != names.end()) kept.push_back(c);
        return Schema(std::move(kept), label_, protected_);
    }

    std::uint64_t fingerprint() const;

    bool operator==(const Schema& other) const {
        if (label_ != other.label_ || protected_ != other.protected_) return false;
        if (columns_.size() != other.columns_.size()) return false;
        for (std::size_t i = 0; i < columns_.size(); ++i)
            if (columns_[i].name != other.columns_[i].name || !columns_[i].same_kind(other.columns_[i]))
                return false;
        return true;
    }

private:
    void validate() const {
        std::set<std::string> names;
        for (const auto& c : columns_) {
            c.validate();
            if (!names.insert(c.name).second) throw Error("duplicate column name '" + c.name + "'");
        }
        for (const auto* role : {&label_, &protected_}) {
            auto i = find(*role);
            if (!i) throw Error("designated column '" + *role + "' is not in the schema");
            const auto& c = columns_[*i];
            if (!c.is_categorical() || c.cardinality() != 2)
                throw Error("designated column '" + *role + "' must be binary categorical");
        }
        if (label_ == protected_) throw Error("label and protected column must differ");
    }

    std::vector<ColumnSpec> columns_;
    std::string label_;
    std::string protected_;
};

// ---------------------------------------------------------------------------
// Schema descriptor files (JSON)

inline constexpr const char* kSchemaFormat = "fairrepro.schema.v1";

inline nlohmann::json schema_to_json(const Schema& schema) {
    nlohmann::json cols = nlohmann::json::array();
    for (const auto& c : schema.columns()) {
        nlohmann::json j;
        j["name"] = c.name;
        if (c.is_categorical()) {
            j["kind"] = "categorical";
            j["categories"] = c.categories;
        } else {
            j["kind"] = "numeric";
            j["min"] = c.min;
            j["max"] = c.max;
        }
        cols.push_back(std::move(j));
    }
    return {{"format", kSchemaFormat},
            {"label", schema.label_column()},
            {"protected", schema.protected_column()},
            {"columns", std::move(cols)}};
}

inline Schema schema_from_json(const nlohmann::json& j) {
    if (j.value("format", std::string{}) != kSchemaFormat)
        throw Error(std::string("schema descriptor: expected format '") + kSchemaFormat + "'");
    std::vector<ColumnSpec> cols;
    for (const auto& c : j.at("columns")) {
        const auto kind = c.at("kind").get<std::string>();
        if (kind == "categorical") {
            cols.push_back(ColumnSpec::categorical(c.at("name").get<std::string>(),
                                                   c.at("categories").get<std::vector<std::string>>()));
        } else if (kind == "numeric") {
            cols.push_back(ColumnSpec::numeric(c.at("name").get<std::string>(), c.at("min").get<double>(),
                                               c.at("max").get<double>()));
        } else {
            throw Error("schema descriptor: unknown column kind '" + kind + "'");
        }
    }
    return Schema(std::move(cols), j.at("label").get<std::string>(), j.at("protected").get<std::string>());
}

inline Schema load_schema(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw Error("cannot open schema file " + path.string());
    return schema_from_json(nlohmann::json::parse(in));
}

inline std::uint64_t Schema::fingerprint() const {
    Fnv1a h;
    h.update(schema_to_json(*this).dump());
    return h.digest();
}

// ---------------------------------------------------------------------------
// Dataset

/// One value per column. Categorical cells hold the category index, numeric
/// cells hold the raw value.
using Row = std::vector<double>;

class Dataset {
public:
    Dataset(Schema schema, std::vector<Row> rows) : schema_(std::move(schema)), rows_(std::move(rows)) {
        if (rows_.empty()) throw Error("dataset must contain at least one row");
        for (std::size_t r = 0; r < rows_.size(); ++r) check_row(rows_[r], r);
    }

    const Schema& schema() const { return schema_; }
    const std::vector<Row>& rows() const { return rows_; }
    std::size_t size() const { return rows_.size(); }

    int label(std::size_t row) const { return static_cast<int>(rows_[row][schema_.label_index()]); }
    int protected_attr(std::size_t row) const {
        return static_cast<int>(rows_[row][schema_.protected_index()]);
    }
    std::vector<int> labels() const { return column_as_int(schema_.label_index()); }
    std::vector<int> protected_attrs() const { return column_as_int(schema_.protected_index()); }

    std::vector<int> column_as_int(std::size_t col) const {
        std::vector<int> out(rows_.size());
        for (std::size_t r = 0; r < rows_.size(); ++r) out[r] = static_cast<int>(rows_[r][col]);
        return out;
    }

    /// Same rows, label/protected designation changed.
    Dataset with_roles(const std::string& label_column, const std::string& protected_column) const {
        return Dataset(schema_.with_roles(label_column, protected_column), rows_);
    }

    /// Projects onto the named columns.
    Dataset project(const std::vector<std::string>& names) const {
        Schema sub = schema_.restricted_to(names);
        std::vector<std::size_t> idx;
        for (const auto& c : sub.columns()) idx.push_back(schema_.index_of(c.name));
        std::vector<Row> rows;
        rows.reserve(rows_.size());
        for (const auto& row : rows_) {
            Row out;
            out.reserve(idx.size());
            for (auto i : idx) out.push_back(row[i]);
            rows.push_back(std::move(out));
        }
        return Dataset(std::move(sub), std::move(rows));
    }

    Dataset subset(const std::vector<std::size_t>& indices) const {
        std::vector<Row> rows;
        rows.reserve(indices.size());
        for (auto i : indices) rows.push_back(rows_.at(i));
        return Dataset(schema_, std::move(rows));
    }

    bool operator==(const Dataset& other) const = default;

    /// Empty string when the row conforms, otherwise the reason.
    static std::string row_violation(const Schema& schema, const Row& row) {
        if (row.size() != schema.size()) return "wrong number of values";
        for (std::size_t c = 0; c < row.size(); ++c) {
            const auto& spec = schema.columns()[c];
            const double v = row[c];
            if (spec.is_categorical()) {
                if (!(v >= 0.0) || v >= static_cast<double>(spec.cardinality()) || v != std::floor(v))
                    return "column '" + spec.name + "': invalid category index";
            } else if (!(v >= spec.min && v <= spec.max)) {
                return "column '" + spec.name + "': value outside [min, max]";
            }
        }
        return {};
    }

private:
    void check_row(const Row& row, std::size_t r) const {
        auto why = row_violation(schema_, row);
        if (!why.empty()) throw Error("row " + std::to_string(r) + ": " + why);
    }

    Schema schema_;
    std::vector<Row> rows_;
};

// ---------------------------------------------------------------------------
// CSV ingestion

struct LoadOptions {
    bool strict = false;
    char delimiter = ',';
};

struct LoadReport {
    std::size_t accepted = 0;
    std::size_t rejected = 0;
    std::vector<std::string> messages; // one per rejected row, capped
};

namespace detail {

inline std::vector<std::string> split_csv_line(const std::string& line, char delim) {
    std::vector<std::string> out;
    std::string cur;
    bool quoted = false;
    for (std::size_t i = 0; i < line.size(); ++i) {
        const char ch = line[i];
        if (quoted) {
            if (ch == '"') {
                if (i + 1 < line.size() && line[i + 1] == '"') {
                    cur += '"';
                    ++i;
                } else {
                    quoted = false;
                }
            } else {
                cur += ch;
            }
        } else if (ch == '"') {
            quoted = true;
        } else if (ch == delim) {
            out.push_back(std::move(cur));
            cur.clear();
        } else if (ch != '\r') {
            cur += ch;
        }
    }
    out.push_back(std::move(cur));
    return out;
}

inline std::string trim(std::string s) {
    auto not_space = [](unsigned char c) { return !std::isspace(c); };
    s.erase(s.begin(), std::find_if(s.begin(), s.end(), not_space));
    s.erase(std::find_if(s.rbegin(), s.rend(), not_space).base(), s.end());
    return s;
}

} // namespace detail

/// Reads a CSV whose header names every schema column (any order, extra
/// columns ignored). Non-conforming rows are rejected and counted; in strict
/// mode the first one aborts the load.
inline Dataset load_csv(std::istream& in, const Schema& schema, LoadReport* report = nullptr,
                        const LoadOptions& options = {}) {
    LoadReport local;
    LoadReport& rep = report ? *report : local;
    rep = {};
    std::string line;
    if (!std::getline(in, line)) throw Error("csv: missing header row");
    auto header = detail::split_csv_line(line, options.delimiter);
    for (auto& h : header) h = detail::trim(h);

    std::vector<std::size_t> source_col(schema.size());
    for (std::size_t c = 0; c < schema.size(); ++c) {
        auto it = std::find(header.begin(), header.end(), schema.columns()[c].name);
        if (it == header.end()) throw Error("csv: missing column '" + schema.columns()[c].name + "'");
        source_col[c] = static_cast<std::size_t>(it - header.begin());
    }

    std::vector<Row> rows;
    std::size_t line_no = 1;
    while (std::getline(in, line)) {
        ++line_no;
        if (detail::trim(line).empty()) continue;
        const auto fields = detail::split_csv_line(line, options.delimiter);
        Row row(schema.size());
        std::string problem;
        for (std::size_t c = 0; c < schema.size() && problem.empty(); ++c) {
            const auto& spec = schema.columns()[c];
            if (source_col[c] >= fields.size()) {
                problem = "too few fields";
                break;
            }
            const std::string field = detail::trim(fields[source_col[c]]);
            if (spec.is_categorical()) {
                auto idx = spec.category_index(field);
                if (!idx) problem = "column '" + spec.name + "': unknown category '" + field + "'";
                else row[c] = static_cast<double>(*idx);
            } else {
                double v = 0.0;
                auto [ptr, ec] = std::from_chars(field.data(), field.data() + field.size(), v);
                if (ec != std::errc{} || ptr != field.data() + field.size())
                    problem = "column '" + spec.name + "': not a number '" + field + "'";
                else if (v < spec.min || v > spec.max)
                    problem = "column '" + spec.name + "': value " + field + " outside range";
                else row[c] = v;
            }
        }
        if (!problem.empty()) {
            const std::string msg = "line " + std::to_string(line_no) + ": " + problem;
            if (options.strict) throw Error("csv: " + msg);
            ++rep.rejected;
            if (rep.messages.size() < 100) rep.messages.push_back(msg);
            continue;
        }
        rows.push_back(std::move(row));
    }
    rep.accepted = rows.size();
    if (rows.empty()) throw Error("csv: no valid rows");
    return Dataset(schema, std::move(rows));
}

inline Dataset load_csv(const std::filesystem::path& path, const Schema& schema, LoadReport* report = nullptr,
                        const LoadOptions& options = {}) {
    std::ifstream in(path);
    if (!in) throw Error("cannot open csv file " + path.string());
    return load_csv(in, schema, report, options);
}

inline void write_csv(std::ostream& out, const Dataset& data) {
    const auto& cols = data.schema().columns();
    for (std::size_t c = 0; c < cols.size(); ++c) out << (c ? "," : "") << cols[c].name;
    out << '\n';
    char buf[64];
    for (const auto& row : data.rows()) {
        for (std::size_t c = 0; c < cols.size(); ++c) {
            if (c) out << ',';
            if (cols[c].is_categorical()) {
                out << cols[c].categories[static_cast<std::size_t>(row[c])];
            } else {
                auto [ptr, ec] = std::to_chars(buf, buf + sizeof buf, row[c]);
                out.write(buf, ptr - buf);
            }
        }
        out << '\n';
    }
}

// ---------------------------------------------------------------------------
// Encoding

/// Contiguous block of encoded features belonging to one column.
struct ColumnGroup {
    std::string name;
    ColumnKind kind;
    std::size_t offset;
    std::size_t width;
};

/// Encoded layout of a schema: feature columns in schema order (one-hot for
/// categoricals, one min-max scaled slot for numerics), followed by a single
/// bit for the label and a single bit for the protected attribute.
class EncodedLayout {
public:
    explicit EncodedLayout(const Schema& schema) {
        std::size_t offset = 0;
        for (auto i : schema.feature_indices()) {
            const auto& c = schema.columns()[i];
            const std::size_t w = c.is_categorical() ? c.cardinality() : 1;
            groups_.push_back({c.name, c.kind, offset, w});
            offset += w;
        }
        feature_width_ = offset;
    }

    const std::vector<ColumnGroup>& feature_groups() const { return groups_; }
    std::size_t feature_width() const { return feature_width_; }
    std::size_t label_offset() const { return feature_width_; }
    std::size_t protected_offset() const { return feature_width_ + 1; }
    std::size_t width() const { return feature_width_ + 2; }

    const ColumnGroup* group(std::string_view name) const {
        for (const auto& g : groups_)
            if (g.name == name) return &g;
        return nullptr;
    }

private:
    std::vector<ColumnGroup> groups_;
    std::size_t feature_width_ = 0;
};

struct EncodedMatrix {
    std::size_t feature_dim = 0; // total width including label and protected bits
    Matrix rows;
    std::vector<ColumnGroup> column_groups; // features, then label, then protected

    /// Feature block only (label and protected bits excluded).
    Matrix features(const EncodedLayout& layout) const {
        return rows.leftCols(static_cast<Eigen::Index>(layout.feature_width()));
    }
    /// Features with the protected bit appended (the VAE / generator input).
    Matrix features_with_protected(const EncodedLayout& layout) const {
        Matrix out(rows.rows(), static_cast<Eigen::Index>(layout.feature_width() + 1));
        out.leftCols(static_cast<Eigen::Index>(layout.feature_width())) = features(layout);
        out.col(out.cols() - 1) = rows.col(static_cast<Eigen::Index>(layout.protected_offset()));
        return out;
    }
};

inline double normalize(const ColumnSpec& c, double v) { return (v - c.min) / (c.max - c.min); }
inline double denormalize(const ColumnSpec& c, double t) {
    return c.min + std::clamp(t, 0.0, 1.0) * (c.max - c.min);
}

inline EncodedMatrix encode(const Dataset& data) {
    const auto& schema = data.schema();
    const EncodedLayout layout(schema);
    EncodedMatrix m;
    m.feature_dim = layout.width();
    m.column_groups = layout.feature_groups();
    m.column_groups.push_back({schema.label_column(), ColumnKind::categorical, layout.label_offset(), 1});
    m.column_groups.push_back({schema.protected_column(), ColumnKind::categorical, layout.protected_offset(), 1});
    m.rows = Matrix::Zero(static_cast<Eigen::Index>(data.size()), static_cast<Eigen::Index>(layout.width()));

    const auto features = schema.feature_indices();
    const auto label_col = schema.label_index();
    const auto prot_col = schema.protected_index();
    for (std::size_t r = 0; r < data.size(); ++r) {
        const auto& row = data.rows()[r];
        const auto ri = static_cast<Eigen::Index>(r);
        for (std::size_t k = 0; k < features.size(); ++k) {
            const auto& spec = schema.columns()[features[k]];
            const auto& g = layout.feature_groups()[k];
            if (spec.is_categorical())
                m.rows(ri, static_cast<Eigen::Index>(g.offset + static_cast<std::size_t>(row[features[k]]))) = 1.0;
            else
                m.rows(ri, static_cast<Eigen::Index>(g.offset)) = normalize(spec, row[features[k]]);
        }
        m.rows(ri, static_cast<Eigen::Index>(layout.label_offset())) = row[label_col];
        m.rows(ri, static_cast<Eigen::Index>(layout.protected_offset())) = row[prot_col];
    }
    return m;
}

/// Index of the largest entry; ties go to the lowest index.
template <typename Vec>
std::size_t argmax_lowest(const Vec& v) {
    std::size_t best = 0;
    for (Eigen::Index i = 1; i < v.size(); ++i)
        if (v(i) > v(static_cast<Eigen::Index>(best))) best = static_cast<std::size_t>(i);
    return best;
}

/// Decodes one encoded row (features, label bit, protected bit) into a Row.
/// Single bits decode to the second category only when strictly above 0.5.
inline Row decode_row(const Eigen::Ref<const Eigen::RowVectorXd>& enc, const Schema& schema,
                      const EncodedLayout& layout) {
    Row row(schema.size(), 0.0);
    const auto features = schema.feature_indices();
    for (std::size_t k = 0; k < features.size(); ++k) {
        const auto& spec = schema.columns()[features[k]];
        const auto& g = layout.feature_groups()[k];
        const auto seg = enc.segment(static_cast<Eigen::Index>(g.offset), static_cast<Eigen::Index>(g.width));
        row[features[k]] = spec.is_categorical() ? static_cast<double>(argmax_lowest(seg))
                                                 : denormalize(spec, seg(0));
    }
    row[schema.label_index()] = enc(static_cast<Eigen::Index>(layout.label_offset())) > 0.5 ? 1.0 : 0.0;
    row[schema.protected_index()] = enc(static_cast<Eigen::Index>(layout.protected_offset())) > 0.5 ? 1.0 : 0.0;
    return row;
}

inline Dataset decode(const Matrix& matrix, const Schema& schema) {
    const EncodedLayout layout(schema);
    if (static_cast<std::size_t>(matrix.cols()) != layout.width())
        throw Error("decode: matrix width " + std::to_string(matrix.cols()) + " does not match schema width " +
                    std::to_string(layout.width()));
    std::vector<Row> rows;
    rows.reserve(static_cast<std::size_t>(matrix.rows()));
    for (Eigen::Index r = 0; r < matrix.rows(); ++r) rows.push_back(decode_row(matrix.row(r), schema, layout));
    return Dataset(schema, std::move(rows));
}

inline Dataset decode(const EncodedMatrix& matrix, const Schema& schema) { return decode(matrix.rows, schema); }

// ---------------------------------------------------------------------------
// Alignment

struct AlignmentMap {
    std::vector<std::string> shared;              // in source order
    std::vector<std::string> dropped_from_target; // target-only columns
    std::vector<std::string> added_in_source;     // source-only columns
};

/// Partitions the columns of two schemas whose column sets are nested.
/// Columns match by name; a shared name must carry the same kind (and the
/// same categories or numeric range, since the encodings must agree).
inline AlignmentMap align(const Schema& source, const Schema& target) {
    AlignmentMap map;
    for (const auto& c : source.columns()) {
        if (auto t = target.find(c.name)) {
            if (!c.same_kind(target.columns()[*t])) throw Error("align: kind mismatch on shared column '" + c.name + "'");
            map.shared.push_back(c.name);
        } else {
            map.added_in_source.push_back(c.name);
        }
    }
    for (const auto& c : target.columns())
        if (!source.find(c.name)) map.dropped_from_target.push_back(c.name);
    if (map.shared.empty()) throw Error("align: schemas share no columns");
    if (!map.added_in_source.empty() && !map.dropped_from_target.empty())
        throw Error("align: target columns are neither a subset nor a superset of source columns");
    return map;
}

/// Encoded positions of one feature column in both layouts.
struct SharedSlice {
    std::string name;
    std::size_t base_offset;
    std::size_t target_offset;
    std::size_t width;
    bool categorical;
};

/// Columns that are features (neither label nor protected) in both schemas,
/// with their encoded positions. These are the only columns the realism
/// discriminator and the realism check look at.
inline std::vector<SharedSlice> shared_feature_slices(const Schema& base, const Schema& target,
                                                      const AlignmentMap& map) {
    const EncodedLayout base_layout(base), target_layout(target);
    std::vector<SharedSlice> out;
    for (const auto& name : map.shared) {
        const auto* b = base_layout.group(name);
        const auto* t = target_layout.group(name);
        if (b && t) out.push_back({name, b->offset, t->offset, b->width, b->kind == ColumnKind::categorical});
    }
    return out;
}

// ---------------------------------------------------------------------------
// Splitting

struct Split {
    Dataset train;
    Dataset val;
    Dataset test;
};

inline Split split(const Dataset& data, std::array<double, 3> fractions, std::uint64_t seed) {
    for (double f : fractions)
        if (!(f > 0.0)) throw Error("split: fractions must be positive");
    if (std::abs(fractions[0] + fractions[1] + fractions[2] - 1.0) > 1e-9)
        throw Error("split: fractions must sum to 1");
    const std::size_t n = data.size();
    const auto n_train = static_cast<std::size_t>(std::llround(static_cast<double>(n) * fractions[0]));
    const auto n_val = static_cast<std::size_t>(std::llround(static_cast<double>(n) * fractions[1]));
    if (n_train == 0 || n_val == 0 || n_train + n_val >= n) throw Error("split: a partition would be empty");

    std::vector<std::size_t> order(n);
    for (std::size_t i = 0; i < n; ++i) order[i] = i;
    Rng rng(seed);
    rng.shuffle(order);
    auto part = [&](std::size_t from, std::size_t to) {
        return data.subset(std::vector<std::size_t>(order.begin() + static_cast<std::ptrdiff_t>(from),
                                                    order.begin() + static_cast<std::ptrdiff_t>(to)));
    };
    return {part(0, n_train), part(n_train, n_train + n_val), part(n_train + n_val, n)};
}

} // namespace fairrepro
