#include "zsxm/losses.hpp"

#include <cmath>

#include "json.hpp"

namespace zsxm {

std::string_view to_string(LossTerm t) {
    switch (t) {
        case LossTerm::ce: return "ce";
        case LossTerm::iii: return "iii";
        case LossTerm::dl: return "dl";
        case LossTerm::cpl: return "cpl";
    }
    return "?";
}

LossTerm parse_loss_term(std::string_view name) {
    for (auto t : kAllTerms)
        if (to_string(t) == name) return t;
    throw Error(Errc::invalid_argument, "unknown loss term '" + std::string(name) + "'");
}

void LossConfig::validate() const {
    if (!(margin >= 0.0) || !std::isfinite(margin)) throw Error(Errc::invalid_argument, "margin must be >= 0");
    if (enabled.empty()) throw Error(Errc::invalid_argument, "at least one loss term must be enabled");
    for (double w : weights)
        if (!(w >= 0.0) || !std::isfinite(w)) throw Error(Errc::invalid_argument, "loss weights must be >= 0");
}

double& LossReport::term(LossTerm t) {
    switch (t) {
        case LossTerm::ce: return ce;
        case LossTerm::iii: return iii;
        case LossTerm::dl: return dl;
        case LossTerm::cpl: return cpl;
    }
    return total;
}

double LossReport::term(LossTerm t) const { return const_cast<LossReport*>(this)->term(t); }

std::string LossReport::json_line(std::size_t step) const {
    nlohmann::ordered_json j;
    j["step"] = step;
    j["ce"] = ce;
    j["iii"] = iii;
    j["dl"] = dl;
    j["cpl"] = cpl;
    j["total"] = total;
    return j.dump();
}

LossAndGrad ce_loss(const Matrix& logits, std::span<const std::size_t> labels) {
    const Eigen::Index n = logits.rows();
    if (n == 0 || static_cast<std::size_t>(n) != labels.size())
        throw Error(Errc::dimension_mismatch, "cross-entropy needs one label per logit row");
    LossAndGrad out{0.0, Matrix(n, logits.cols())};
    for (Eigen::Index r = 0; r < n; ++r) {
        const std::size_t y = labels[static_cast<std::size_t>(r)];
        if (y >= static_cast<std::size_t>(logits.cols()))
            throw Error(Errc::invalid_argument, "label " + std::to_string(y) + " out of range for " +
                                                    std::to_string(logits.cols()) + " classes");
        const double mx = logits.row(r).maxCoeff();
        const Eigen::RowVectorXd e = (logits.row(r).array() - mx).exp();
        const double sum = e.sum();
        out.value += std::log(sum) + mx - logits(r, static_cast<Eigen::Index>(y));
        out.grad.row(r) = e / sum;
        out.grad(r, static_cast<Eigen::Index>(y)) -= 1.0;
    }
    const double nd = static_cast<double>(n);
    out.value /= nd;
    out.grad /= nd;
    return out;
}

TripletLoss cross_triplet_loss(const Vector& anchor, const Vector& positive, const Vector& negative, double margin) {
    if (anchor.size() != positive.size() || anchor.size() != negative.size())
        throw Error(Errc::dimension_mismatch, "triplet members must share one dimension");
    const Vector dp = anchor - positive;
    const Vector dn = anchor - negative;
    const double raw = dp.squaredNorm() - dn.squaredNorm() + margin;
    TripletLoss out;
    if (raw > 0.0) {
        out.value = raw;
        out.grad_anchor = 2.0 * (dp - dn);
        out.grad_positive = -2.0 * dp;
        out.grad_negative = 2.0 * dn;
    } else {
        out.grad_anchor = Vector::Zero(anchor.size());
        out.grad_positive = Vector::Zero(anchor.size());
        out.grad_negative = Vector::Zero(anchor.size());
    }
    return out;
}

BatchTripletLoss batch_triplet_loss(const Matrix& sketch, const Matrix& image, std::span<const TripletRows> triplets,
                                    double margin) {
    if (triplets.empty()) throw Error(Errc::invalid_argument, "empty triplet batch");
    if (sketch.cols() != image.cols()) throw Error(Errc::dimension_mismatch, "sketch/image embedding dims differ");

    std::size_t n_sketch = 0;
    for (const auto& t : triplets) n_sketch += t.anchor_modality == Modality::Sketch;
    const std::size_t n_image = triplets.size() - n_sketch;

    BatchTripletLoss out;
    out.grad_sketch = Matrix::Zero(sketch.rows(), sketch.cols());
    out.grad_image = Matrix::Zero(image.rows(), image.cols());
    for (const auto& t : triplets) {
        const bool sk = t.anchor_modality == Modality::Sketch;
        const Matrix& anchors = sk ? sketch : image;
        const Matrix& others = sk ? image : sketch;
        Matrix& g_anchor = sk ? out.grad_sketch : out.grad_image;
        Matrix& g_other = sk ? out.grad_image : out.grad_sketch;
        const double scale = 1.0 / static_cast<double>(sk ? n_sketch : n_image);
        if (t.anchor < 0 || t.anchor >= anchors.rows() || t.positive < 0 || t.positive >= others.rows() ||
            t.negative < 0 || t.negative >= others.rows())
            throw Error(Errc::invalid_argument, "triplet row out of range");

        const auto a = anchors.row(t.anchor);
        const auto p = others.row(t.positive);
        const auto n = others.row(t.negative);
        const double raw = (a - p).squaredNorm() - (a - n).squaredNorm() + margin;
        if (raw <= 0.0) continue;
        (sk ? out.sketch_anchored : out.image_anchored) += raw * scale;
        g_anchor.row(t.anchor) += 2.0 * scale * (n - p);
        g_other.row(t.positive) += -2.0 * scale * (a - p);
        g_other.row(t.negative) += 2.0 * scale * (a - n);
    }
    out.value = out.sketch_anchored + out.image_anchored;
    return out;
}

DecoderLoss decoder_loss(const Matrix& sketch, const Matrix& image, const DecoderParams& dec_i,
                         const DecoderParams& dec_s) {
    if (sketch.rows() != image.rows() || sketch.rows() == 0)
        throw Error(Errc::dimension_mismatch, "decoder loss needs the same nonzero number of sketch and image rows");
    const double scale = 2.0 / static_cast<double>(sketch.rows());
    const Matrix r_i = affine_forward(dec_i, sketch) - image;
    const Matrix r_s = affine_forward(dec_s, image) - sketch;

    DecoderLoss out;
    out.value = (r_i.squaredNorm() + r_s.squaredNorm()) / static_cast<double>(sketch.rows());
    const Matrix d_i = scale * r_i;
    const Matrix d_s = scale * r_s;
    auto bi = affine_backward(dec_i, sketch, d_i);
    auto bs = affine_backward(dec_s, image, d_s);
    out.grad_dec_i = std::move(bi.grads);
    out.grad_dec_s = std::move(bs.grads);
    out.grad_sketch = bi.grad_in - d_s;
    out.grad_image = bs.grad_in - d_i;
    return out;
}

ProjectionLoss projection_loss(const Matrix& embeddings, const Matrix& targets) {
    if (embeddings.rows() != targets.rows() || embeddings.cols() != targets.cols() || embeddings.rows() == 0)
        throw Error(Errc::dimension_mismatch, "projection loss needs one target of matching dimension per row");
    const Matrix diff = embeddings - targets;
    ProjectionLoss out;
    out.value = diff.squaredNorm() / static_cast<double>(embeddings.rows());
    out.grad_embeddings = (2.0 / static_cast<double>(embeddings.rows())) * diff;
    out.grad_targets = -out.grad_embeddings;
    return out;
}

ProjectionLoss projection_loss(const Matrix& embeddings, std::span<const std::string> labels,
                               const SemanticTable& semantics) {
    if (static_cast<std::size_t>(embeddings.cols()) != semantics.dim())
        throw Error(Errc::dimension_mismatch, "embedding dimension " + std::to_string(embeddings.cols()) +
                                                  " does not match semantic dimension " +
                                                  std::to_string(semantics.dim()));
    return projection_loss(embeddings, semantics.rows({labels.begin(), labels.end()}));
}

namespace {

void require(bool ok, LossTerm t, const char* what) {
    if (!ok)
        throw Error(Errc::invalid_argument,
                    "loss term '" + std::string(to_string(t)) + "' is enabled but " + what + " is missing");
}

}  // namespace

TotalLoss total_loss(const LossConfig& cfg, const LossInputs& in, std::optional<LossTerm> grad_term) {
    cfg.validate();
    if (!in.sketch || !in.image) throw Error(Errc::invalid_argument, "embeddings are required");
    const Matrix& vs = *in.sketch;
    const Matrix& vi = *in.image;
    if (vs.cols() != vi.cols()) throw Error(Errc::dimension_mismatch, "sketch/image embedding dims differ");

    TotalLoss out;
    auto& g = out.grads;
    g.sketch = Matrix::Zero(vs.rows(), vs.cols());
    g.image = Matrix::Zero(vi.rows(), vi.cols());
    auto wants_grad = [&](LossTerm t) { return !grad_term || *grad_term == t; };

    if (cfg.is_enabled(LossTerm::ce)) {
        require(in.head != nullptr, LossTerm::ce, "the classifier head");
        const auto& head = *in.head;
        const Matrix zs = affine_forward(head, vs);
        const Matrix zi = affine_forward(head, vi);
        const auto ls = ce_loss(zs, in.sketch_labels);
        const auto li = ce_loss(zi, in.image_labels);
        out.report.ce = ls.value + li.value;
        if (wants_grad(LossTerm::ce)) {
            const double w = cfg.weight(LossTerm::ce);
            auto bs = affine_backward(head, vs, ls.grad);
            auto bi = affine_backward(head, vi, li.grad);
            g.head.weight = w * (bs.grads.weight + bi.grads.weight);
            g.head.bias = w * (bs.grads.bias + bi.grads.bias);
            g.sketch += w * bs.grad_in;
            g.image += w * bi.grad_in;
        }
    }

    if (cfg.is_enabled(LossTerm::iii)) {
        require(!in.triplets.empty(), LossTerm::iii, "the triplet list");
        const auto t = batch_triplet_loss(vs, vi, in.triplets, cfg.margin);
        out.report.iii = t.value;
        if (wants_grad(LossTerm::iii)) {
            const double w = cfg.weight(LossTerm::iii);
            g.sketch += w * t.grad_sketch;
            g.image += w * t.grad_image;
        }
    }

    const Eigen::Index np = in.paired_rows;
    if (cfg.is_enabled(LossTerm::dl)) {
        require(in.dec_i && in.dec_s, LossTerm::dl, "a decoder");
        require(np > 0 && np <= vs.rows() && np <= vi.rows(), LossTerm::dl, "the paired rows");
        const auto d = decoder_loss(vs.topRows(np), vi.topRows(np), *in.dec_i, *in.dec_s);
        out.report.dl = d.value;
        if (wants_grad(LossTerm::dl)) {
            const double w = cfg.weight(LossTerm::dl);
            g.dec_i = d.grad_dec_i;
            g.dec_i.weight *= w;
            g.dec_i.bias *= w;
            g.dec_s = d.grad_dec_s;
            g.dec_s.weight *= w;
            g.dec_s.bias *= w;
            g.sketch.topRows(np) += w * d.grad_sketch;
            g.image.topRows(np) += w * d.grad_image;
        }
    }

    if (cfg.is_enabled(LossTerm::cpl)) {
        require(in.targets != nullptr, LossTerm::cpl, "the semantic targets");
        require(np > 0 && np <= vs.rows() && np <= vi.rows() && in.targets->rows() == np, LossTerm::cpl,
                "the paired rows");
        const auto ps = projection_loss(vs.topRows(np), *in.targets);
        const auto pi = projection_loss(vi.topRows(np), *in.targets);
        out.report.cpl = ps.value + pi.value;
        if (wants_grad(LossTerm::cpl)) {
            const double w = cfg.weight(LossTerm::cpl);
            g.sketch.topRows(np) += w * ps.grad_embeddings;
            g.image.topRows(np) += w * pi.grad_embeddings;
            g.targets = w * (ps.grad_targets + pi.grad_targets);
        }
    }

    for (auto t : kAllTerms)
        if (cfg.is_enabled(t)) out.report.total += cfg.weight(t) * out.report.term(t);

    // Absent gradients come back as correctly shaped zeros.
    auto zero_like = [](AffineLayer& gl, const AffineLayer* ref) {
        if (ref && gl.weight.size() == 0) {
            gl.weight = Matrix::Zero(ref->weight.rows(), ref->weight.cols());
            gl.bias = Vector::Zero(ref->bias.size());
        }
    };
    zero_like(g.head, in.head);
    zero_like(g.dec_i, in.dec_i);
    zero_like(g.dec_s, in.dec_s);
    if (in.targets && g.targets.size() == 0) g.targets = Matrix::Zero(in.targets->rows(), in.targets->cols());
    return out;
}

}  // namespace zsxm
