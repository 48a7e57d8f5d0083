#include "ckd/model/encoder.hpp"

#include <cmath>
#include <map>

#include "ckd/errors.hpp"

namespace ckd::model {

namespace {

constexpr double kMaskBias = -1e30;

Tensor xavier(Rng& rng, std::size_t out_dim, std::size_t in_dim) {
    const double stddev = std::sqrt(2.0 / static_cast<double>(out_dim + in_dim));
    return Tensor::randn(rng, {out_dim, in_dim}, stddev, true);
}

std::string layer_key(std::size_t i, const char* suffix) {
    return "layer" + std::to_string(i) + "." + suffix;
}

} // namespace

void EncoderConfig::validate() const {
    if (layers < 1 || heads < 1 || d_model < 1 || d_ff < 1 || max_seq_len < 1 ||
        num_labels < 1) {
        throw config_error("encoder config extents must all be >= 1");
    }
    if (d_model % heads != 0) {
        throw config_error("d_model " + std::to_string(d_model) + " not divisible by heads " +
                           std::to_string(heads));
    }
    if (vocab_size < 3) {
        throw config_error("vocab_size must cover the special tokens, got " +
                           std::to_string(vocab_size));
    }
}

EncoderConfig EncoderConfig::teacher_defaults() {
    EncoderConfig c;
    c.layers = 4;
    c.heads = 4;
    c.d_model = 128;
    c.d_ff = 512;
    return c;
}

EncoderConfig EncoderConfig::student_defaults() {
    EncoderConfig c;
    c.layers = 2;
    c.heads = 2;
    c.d_model = 64;
    c.d_ff = 256;
    return c;
}

Encoder Encoder::init(const EncoderConfig& config, Rng& rng) {
    config.validate();
    Encoder enc;
    enc.config_ = config;
    const double emb_std = 1.0 / std::sqrt(static_cast<double>(config.d_model));
    enc.tok_emb_ = Tensor::randn(rng, {config.vocab_size, config.d_model}, emb_std, true);
    enc.pos_emb_ = Tensor::randn(rng, {config.max_seq_len, config.d_model}, emb_std, true);
    for (std::size_t i = 0; i < config.layers; ++i) {
        EncoderLayer layer;
        layer.wq = xavier(rng, config.d_model, config.d_model);
        layer.bq = Tensor::zeros({config.d_model}, true);
        layer.wk = xavier(rng, config.d_model, config.d_model);
        layer.bk = Tensor::zeros({config.d_model}, true);
        layer.wv = xavier(rng, config.d_model, config.d_model);
        layer.bv = Tensor::zeros({config.d_model}, true);
        layer.wo = xavier(rng, config.d_model, config.d_model);
        layer.bo = Tensor::zeros({config.d_model}, true);
        layer.ln1_gain = Tensor::full({config.d_model}, 1.0, true);
        layer.ln1_bias = Tensor::zeros({config.d_model}, true);
        layer.w1 = xavier(rng, config.d_ff, config.d_model);
        layer.b1 = Tensor::zeros({config.d_ff}, true);
        layer.w2 = xavier(rng, config.d_model, config.d_ff);
        layer.b2 = Tensor::zeros({config.d_model}, true);
        layer.ln2_gain = Tensor::full({config.d_model}, 1.0, true);
        layer.ln2_bias = Tensor::zeros({config.d_model}, true);
        enc.layers_.push_back(std::move(layer));
    }
    return enc;
}

namespace {

// Linear projection with optional low-rank adaptation.
Tensor project(Tape* tape, const Tensor& x, const Tensor& w, const Tensor& b,
               const LoraAdapter* lora) {
    Tensor out = matmul(tape, x, transpose(tape, w));
    if (lora) {
        const Tensor low = matmul(tape, matmul(tape, x, transpose(tape, lora->a)),
                                  transpose(tape, lora->b));
        out = add(tape, out, low);
    }
    return add_rowvec(tape, out, b);
}

} // namespace

Tensor apply_lora(Tape* tape, const LoraAdapter& adapter, const Tensor& base_w, const Tensor& x) {
    const Tensor base = matmul(tape, x, transpose(tape, base_w));
    const Tensor low =
        matmul(tape, matmul(tape, x, transpose(tape, adapter.a)), transpose(tape, adapter.b));
    return add(tape, base, low);
}

Tensor Encoder::forward(Tape* tape, const TokenBatch& batch) const {
    const std::size_t b = batch.batch, s = batch.seq, d = config_.d_model;
    const std::size_t heads = config_.heads, dh = d / heads;
    if (batch.ids.size() != b * s || batch.mask.size() != b * s) {
        throw shape_error("token batch extents disagree with id/mask buffers");
    }
    if (s > config_.max_seq_len) {
        throw contract_error("sequence length " + std::to_string(s) +
                             " exceeds max_seq_len " + std::to_string(config_.max_seq_len));
    }
    for (int id : batch.ids) {
        if (id < 0 || static_cast<std::size_t>(id) >= config_.vocab_size) {
            throw contract_error("token id " + std::to_string(id) + " outside vocabulary of " +
                                 std::to_string(config_.vocab_size));
        }
    }

    std::vector<int> pos_ids(b * s);
    for (std::size_t i = 0; i < b; ++i) {
        for (std::size_t j = 0; j < s; ++j) {
            pos_ids[i * s + j] = static_cast<int>(j);
        }
    }
    Tensor x = add(tape, gather_rows(tape, tok_emb_, batch.ids),
                   gather_rows(tape, pos_emb_, pos_ids));

    // One additive attention-bias matrix per batch row, shared by all layers
    // and heads: masked key columns (and future positions when causal) get a
    // large negative score.
    std::vector<Tensor> mask_bias(b);
    for (std::size_t i = 0; i < b; ++i) {
        Tensor bias = Tensor::zeros({s, s});
        for (std::size_t q = 0; q < s; ++q) {
            for (std::size_t kpos = 0; kpos < s; ++kpos) {
                const bool masked = batch.mask[i * s + kpos] == 0;
                const bool future = config_.causal && kpos > q;
                if (masked || future) {
                    bias.data()[q * s + kpos] = kMaskBias;
                }
            }
        }
        mask_bias[i] = bias;
    }

    const double attn_scale = 1.0 / std::sqrt(static_cast<double>(dh));
    for (const auto& layer : layers_) {
        const LoraAdapter* lq = layer.lora ? &layer.lora->q : nullptr;
        const LoraAdapter* lk = layer.lora ? &layer.lora->k : nullptr;
        const LoraAdapter* lv = layer.lora ? &layer.lora->v : nullptr;
        const Tensor q = project(tape, x, layer.wq, layer.bq, lq);
        const Tensor k = project(tape, x, layer.wk, layer.bk, lk);
        const Tensor v = project(tape, x, layer.wv, layer.bv, lv);

        std::vector<Tensor> batch_rows;
        batch_rows.reserve(b);
        for (std::size_t i = 0; i < b; ++i) {
            std::vector<Tensor> head_outputs;
            head_outputs.reserve(heads);
            for (std::size_t h = 0; h < heads; ++h) {
                const std::size_t c0 = h * dh, c1 = (h + 1) * dh;
                const Tensor qh = slice_block(tape, q, i * s, (i + 1) * s, c0, c1);
                const Tensor kh = slice_block(tape, k, i * s, (i + 1) * s, c0, c1);
                const Tensor vh = slice_block(tape, v, i * s, (i + 1) * s, c0, c1);
                Tensor scores = scale(tape, matmul(tape, qh, transpose(tape, kh)), attn_scale);
                scores = add(tape, scores, mask_bias[i]);
                const Tensor weights = softmax_rows(tape, scores);
                head_outputs.push_back(matmul(tape, weights, vh));
            }
            batch_rows.push_back(concat_cols(tape, head_outputs));
        }
        const Tensor attn = concat_rows(tape, batch_rows);
        const Tensor attn_proj = project(tape, attn, layer.wo, layer.bo, nullptr);
        x = layer_norm(tape, add(tape, x, attn_proj), layer.ln1_gain, layer.ln1_bias);

        const Tensor ff1 = relu(tape, project(tape, x, layer.w1, layer.b1, nullptr));
        const Tensor ff2 = project(tape, ff1, layer.w2, layer.b2, nullptr);
        x = layer_norm(tape, add(tape, x, ff2), layer.ln2_gain, layer.ln2_bias);
    }
    return reshape(tape, x, {b, s, d});
}

void Encoder::attach_lora(std::size_t rank, Rng& rng) {
    const std::size_t d = config_.d_model;
    if (rank == 0) {
        throw config_error("LoRA rank must be >= 1 (omit attach_lora to disable adapters)");
    }
    if (rank >= d) {
        throw config_error("LoRA rank " + std::to_string(rank) +
                           " is not low-rank for projection width " + std::to_string(d));
    }
    const double a_scale = 1.0 / std::sqrt(static_cast<double>(d));
    for (auto& layer : layers_) {
        AttentionLora lora;
        for (LoraAdapter* adapter : {&lora.q, &lora.k, &lora.v}) {
            adapter->rank = rank;
            adapter->a = Tensor::rand_uniform(rng, {rank, d}, -a_scale, a_scale, true);
            adapter->b = Tensor::zeros({d, rank}, true);
        }
        layer.lora = std::move(lora);
    }
}

bool Encoder::has_lora() const {
    return !layers_.empty() && layers_.front().lora.has_value();
}

std::size_t Encoder::lora_rank() const {
    return has_lora() ? layers_.front().lora->q.rank : 0;
}

void Encoder::freeze_base() {
    for (auto& t : parameters()) {
        t.set_requires_grad(false);
    }
    for (auto& layer : layers_) {
        if (layer.lora) {
            for (LoraAdapter* adapter : {&layer.lora->q, &layer.lora->k, &layer.lora->v}) {
                adapter->a.set_requires_grad(true);
                adapter->b.set_requires_grad(true);
            }
        }
    }
}

void Encoder::set_all_trainable(bool trainable) {
    for (auto& t : parameters()) {
        t.set_requires_grad(trainable);
    }
}

std::vector<NamedTensor> Encoder::named_parameters() const {
    std::vector<NamedTensor> out;
    out.push_back({"tok_emb", tok_emb_});
    out.push_back({"pos_emb", pos_emb_});
    for (std::size_t i = 0; i < layers_.size(); ++i) {
        const auto& l = layers_[i];
        out.push_back({layer_key(i, "attn.wq"), l.wq});
        out.push_back({layer_key(i, "attn.bq"), l.bq});
        out.push_back({layer_key(i, "attn.wk"), l.wk});
        out.push_back({layer_key(i, "attn.bk"), l.bk});
        out.push_back({layer_key(i, "attn.wv"), l.wv});
        out.push_back({layer_key(i, "attn.bv"), l.bv});
        out.push_back({layer_key(i, "attn.wo"), l.wo});
        out.push_back({layer_key(i, "attn.bo"), l.bo});
        out.push_back({layer_key(i, "ln1.gain"), l.ln1_gain});
        out.push_back({layer_key(i, "ln1.bias"), l.ln1_bias});
        out.push_back({layer_key(i, "ffn.w1"), l.w1});
        out.push_back({layer_key(i, "ffn.b1"), l.b1});
        out.push_back({layer_key(i, "ffn.w2"), l.w2});
        out.push_back({layer_key(i, "ffn.b2"), l.b2});
        out.push_back({layer_key(i, "ln2.gain"), l.ln2_gain});
        out.push_back({layer_key(i, "ln2.bias"), l.ln2_bias});
        if (l.lora) {
            out.push_back({layer_key(i, "lora.q.a"), l.lora->q.a});
            out.push_back({layer_key(i, "lora.q.b"), l.lora->q.b});
            out.push_back({layer_key(i, "lora.k.a"), l.lora->k.a});
            out.push_back({layer_key(i, "lora.k.b"), l.lora->k.b});
            out.push_back({layer_key(i, "lora.v.a"), l.lora->v.a});
            out.push_back({layer_key(i, "lora.v.b"), l.lora->v.b});
        }
    }
    return out;
}

std::vector<Tensor> Encoder::parameters() const {
    std::vector<Tensor> out;
    out.push_back(tok_emb_);
    out.push_back(pos_emb_);
    for (const auto& l : layers_) {
        for (const Tensor& t : {l.wq, l.bq, l.wk, l.bk, l.wv, l.bv, l.wo, l.bo, l.ln1_gain,
                                l.ln1_bias, l.w1, l.b1, l.w2, l.b2, l.ln2_gain, l.ln2_bias}) {
            out.push_back(t);
        }
    }
    return out;
}

std::vector<Tensor> Encoder::trainable_parameters() const {
    std::vector<Tensor> out;
    for (const auto& nt : named_parameters()) {
        if (nt.tensor.requires_grad()) {
            out.push_back(nt.tensor);
        }
    }
    return out;
}

std::size_t Encoder::parameter_count() const {
    std::size_t n = 0;
    for (const auto& nt : named_parameters()) {
        n += nt.tensor.size();
    }
    return n;
}

std::size_t Encoder::trainable_parameter_count() const {
    std::size_t n = 0;
    for (const auto& nt : named_parameters()) {
        if (nt.tensor.requires_grad()) {
            n += nt.tensor.size();
        }
    }
    return n;
}

Encoder Encoder::from_named(const EncoderConfig& config, const std::vector<NamedTensor>& tensors) {
    std::map<std::string, Tensor> by_name;
    for (const auto& nt : tensors) {
        by_name.emplace(nt.name, nt.tensor);
    }
    auto take = [&](const std::string& name) {
        const auto it = by_name.find(name);
        if (it == by_name.end()) {
            throw io_error("checkpoint missing tensor " + name);
        }
        return it->second;
    };
    config.validate();
    Encoder enc;
    enc.config_ = config;
    enc.tok_emb_ = take("tok_emb");
    enc.pos_emb_ = take("pos_emb");
    for (std::size_t i = 0; i < config.layers; ++i) {
        EncoderLayer l;
        l.wq = take(layer_key(i, "attn.wq"));
        l.bq = take(layer_key(i, "attn.bq"));
        l.wk = take(layer_key(i, "attn.wk"));
        l.bk = take(layer_key(i, "attn.bk"));
        l.wv = take(layer_key(i, "attn.wv"));
        l.bv = take(layer_key(i, "attn.bv"));
        l.wo = take(layer_key(i, "attn.wo"));
        l.bo = take(layer_key(i, "attn.bo"));
        l.ln1_gain = take(layer_key(i, "ln1.gain"));
        l.ln1_bias = take(layer_key(i, "ln1.bias"));
        l.w1 = take(layer_key(i, "ffn.w1"));
        l.b1 = take(layer_key(i, "ffn.b1"));
        l.w2 = take(layer_key(i, "ffn.w2"));
        l.b2 = take(layer_key(i, "ffn.b2"));
        l.ln2_gain = take(layer_key(i, "ln2.gain"));
        l.ln2_bias = take(layer_key(i, "ln2.bias"));
        if (by_name.count(layer_key(i, "lora.q.a"))) {
            AttentionLora lora;
            lora.q.a = take(layer_key(i, "lora.q.a"));
            lora.q.b = take(layer_key(i, "lora.q.b"));
            lora.k.a = take(layer_key(i, "lora.k.a"));
            lora.k.b = take(layer_key(i, "lora.k.b"));
            lora.v.a = take(layer_key(i, "lora.v.a"));
            lora.v.b = take(layer_key(i, "lora.v.b"));
            lora.q.rank = lora.q.a.rows();
            lora.k.rank = lora.k.a.rows();
            lora.v.rank = lora.v.a.rows();
            l.lora = std::move(lora);
        }
        enc.layers_.push_back(std::move(l));
    }
    return enc;
}

Encoder Encoder::clone() const {
    std::vector<NamedTensor> copies;
    for (const auto& nt : named_parameters()) {
        Tensor t = nt.tensor.clone();
        copies.push_back({nt.name, std::move(t)});
    }
    Encoder out = from_named(config_, copies);
    // Preserve trainability flags.
    auto mine = named_parameters();
    auto theirs = out.named_parameters();
    for (std::size_t i = 0; i < mine.size(); ++i) {
        theirs[i].tensor.set_requires_grad(mine[i].tensor.requires_grad());
    }
    return out;
}

std::size_t lora_trainable_count(const EncoderConfig& config, std::size_t rank) {
    // Square projections: d == k == d_model.
    return config.layers * 3 * rank * (config.d_model + config.d_model);
}

Mlaph Mlaph::init(std::size_t d_model, std::size_t num_labels, Pooling pooling, Rng& rng) {
    Mlaph head;
    head.pooling = pooling;
    head.weight = xavier(rng, num_labels, d_model);
    head.bias = Tensor::zeros({num_labels}, true);
    return head;
}

Mlaph Mlaph::from_named(Pooling pooling, const std::vector<NamedTensor>& tensors) {
    Mlaph head;
    head.pooling = pooling;
    for (const auto& nt : tensors) {
        if (nt.name == "mlaph.weight") {
            head.weight = nt.tensor;
        } else if (nt.name == "mlaph.bias") {
            head.bias = nt.tensor;
        }
    }
    if (!head.weight.defined() || !head.bias.defined()) {
        throw io_error("checkpoint missing mlaph.weight / mlaph.bias");
    }
    return head;
}

std::vector<NamedTensor> Mlaph::named_parameters() const {
    return {{"mlaph.weight", weight}, {"mlaph.bias", bias}};
}

std::vector<Tensor> Mlaph::parameters() const {
    return {weight, bias};
}

std::size_t Mlaph::parameter_count() const {
    return weight.size() + bias.size();
}

Mlaph Mlaph::clone() const {
    Mlaph out;
    out.pooling = pooling;
    out.weight = weight.clone();
    out.bias = bias.clone();
    return out;
}

Mlaph::Pooling pooling_from_string(const std::string& s) {
    if (s == "last-token") {
        return Mlaph::Pooling::last_token;
    }
    if (s == "mean") {
        return Mlaph::Pooling::mean;
    }
    throw config_error("unknown pooling mode: " + s + " (expected last-token or mean)");
}

const char* to_string(Mlaph::Pooling pooling) {
    return pooling == Mlaph::Pooling::last_token ? "last-token" : "mean";
}

Tensor mlaph_forward(Tape* tape, const Mlaph& head, const Tensor& hidden,
                     const std::vector<int>& mask) {
    if (hidden.rank() != 3) {
        throw shape_error("mlaph_forward expects hidden states [batch, seq, d_model], got " +
                          shape_string(hidden.shape()));
    }
    const std::size_t b = hidden.shape()[0], s = hidden.shape()[1], d = hidden.shape()[2];
    if (head.weight.cols() != d) {
        throw shape_error("mlaph head width " + std::to_string(head.weight.cols()) +
                          " does not match hidden size " + std::to_string(d));
    }
    if (mask.size() != b * s) {
        throw shape_error("mlaph mask has " + std::to_string(mask.size()) + " entries for " +
                          std::to_string(b * s) + " positions");
    }
    const Tensor flat = reshape(tape, hidden, {b * s, d});
    std::vector<Tensor> pooled_rows;
    pooled_rows.reserve(b);
    for (std::size_t i = 0; i < b; ++i) {
        std::size_t real = 0;
        std::size_t last = 0;
        for (std::size_t j = 0; j < s; ++j) {
            if (mask[i * s + j] != 0) {
                ++real;
                last = j;
            }
        }
        if (real == 0) {
            throw contract_error("mlaph_forward: batch row " + std::to_string(i) +
                                 " is entirely PAD, nothing to pool");
        }
        if (head.pooling == Mlaph::Pooling::last_token) {
            pooled_rows.push_back(slice_rows(tape, flat, i * s + last, i * s + last + 1));
        } else {
            Tensor w = Tensor::zeros({1, s});
            for (std::size_t j = 0; j < s; ++j) {
                if (mask[i * s + j] != 0) {
                    w.data()[j] = 1.0 / static_cast<double>(real);
                }
            }
            const Tensor row_block = slice_rows(tape, flat, i * s, (i + 1) * s);
            pooled_rows.push_back(matmul(tape, w, row_block));
        }
    }
    const Tensor pooled = concat_rows(tape, pooled_rows); // [b x d]
    return add_rowvec(tape, matmul(tape, pooled, transpose(tape, head.weight)), head.bias);
}

Tensor vocab_logits(Tape* tape, const Encoder& encoder, const TokenBatch& batch) {
    const Tensor hidden = encoder.forward(tape, batch);
    const std::size_t b = hidden.shape()[0], s = hidden.shape()[1], d = hidden.shape()[2];
    const Tensor flat = reshape(tape, hidden, {b * s, d});
    const Tensor logits = matmul(tape, flat, transpose(tape, encoder.token_embedding()));
    return reshape(tape, logits, {b, s, encoder.config().vocab_size});
}

} // namespace ckd::model
