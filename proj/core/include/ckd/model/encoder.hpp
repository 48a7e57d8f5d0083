#pragma once

#include <optional>
#include <string>
#include <vector>

#include "ckd/checkpoint.hpp"
#include "ckd/model/vocab.hpp"
#include "ckd/rng.hpp"
#include "ckd/tensor.hpp"

namespace ckd::model {

struct EncoderConfig {
    std::size_t layers = 4;
    std::size_t heads = 4;
    std::size_t d_model = 128;
    std::size_t d_ff = 512;
    std::size_t max_seq_len = 128;
    std::size_t vocab_size = 0;
    std::size_t num_labels = 25;
    bool causal = false;

    void validate() const;

    static EncoderConfig teacher_defaults();
    static EncoderConfig student_defaults();
};

// Rank-r additive adaptation of one frozen projection W [d x k]:
// effective weight W' = W + B.A with A [r x k], B [d x r]. B starts at zero
// so a freshly attached adapter leaves the model's outputs untouched, and
// gradients reach only A and B.
struct LoraAdapter {
    Tensor a;
    Tensor b;
    std::size_t rank = 0;
};

// x [n x k] through the adapted projection: x.W^T + (x.A^T).B^T. The low-rank
// term is added separately so a zero B contributes exact zeros.
Tensor apply_lora(Tape* tape, const LoraAdapter& adapter, const Tensor& base_w, const Tensor& x);

struct AttentionLora {
    LoraAdapter q, k, v;
};

struct EncoderLayer {
    Tensor wq, bq, wk, bk, wv, bv, wo, bo; // weights stored [out x in]
    Tensor ln1_gain, ln1_bias;
    Tensor w1, b1, w2, b2; // position-wise feed-forward
    Tensor ln2_gain, ln2_bias;
    std::optional<AttentionLora> lora;
};

class Encoder {
  public:
    Encoder() = default;

    static Encoder init(const EncoderConfig& config, Rng& rng);
    static Encoder from_named(const EncoderConfig& config,
                              const std::vector<NamedTensor>& tensors);

    const EncoderConfig& config() const { return config_; }

    // Hidden states [batch, seq, d_model]. Post-norm layers: masked
    // multi-head self-attention, residual + layer norm, feed-forward,
    // residual + layer norm. PAD key positions get -1e30 before softmax.
    Tensor forward(Tape* tape, const TokenBatch& batch) const;

    // Attach rank-r adapters to Q, K, V of every layer. A ~ U(-1/r, 1/r)
    // scaled small, B = 0. config_error when r >= min(d, k) or r == 0.
    void attach_lora(std::size_t rank, Rng& rng);
    bool has_lora() const;
    std::size_t lora_rank() const;

    // Marks every base parameter non-trainable, adapters (if any) trainable.
    void freeze_base();
    void set_all_trainable(bool trainable);

    std::vector<NamedTensor> named_parameters() const; // deterministic order
    std::vector<Tensor> parameters() const;
    std::vector<Tensor> trainable_parameters() const;
    std::size_t parameter_count() const;
    std::size_t trainable_parameter_count() const; // exhaustive walk

    const Tensor& token_embedding() const { return tok_emb_; }
    const std::vector<EncoderLayer>& layers() const { return layers_; }

    Encoder clone() const;

  private:
    EncoderConfig config_;
    Tensor tok_emb_; // [vocab x d_model]
    Tensor pos_emb_; // [max_seq_len x d_model]
    std::vector<EncoderLayer> layers_;
};

// Trainable parameters of rank-r adapters on Q, K, V of every layer:
// layers x 3 x r x (d + k) with square d_model projections.
std::size_t lora_trainable_count(const EncoderConfig& config, std::size_t rank);

// Pooling of final hidden states followed by a linear map into the label
// space; output width is num_labels for every batch/sequence shape.
struct Mlaph {
    enum class Pooling { last_token, mean };

    Pooling pooling = Pooling::last_token;
    Tensor weight; // [num_labels x d_model]
    Tensor bias;   // [num_labels]

    static Mlaph init(std::size_t d_model, std::size_t num_labels, Pooling pooling, Rng& rng);
    static Mlaph from_named(Pooling pooling, const std::vector<NamedTensor>& tensors);
    std::vector<NamedTensor> named_parameters() const;
    std::vector<Tensor> parameters() const;
    std::size_t parameter_count() const;
    Mlaph clone() const;
};

Mlaph::Pooling pooling_from_string(const std::string& s);
const char* to_string(Mlaph::Pooling pooling);

// Label logits [batch x num_labels]. last_token pools the hidden state at
// the final unmasked position; mean pools the mask-weighted average. A row
// with no unmasked position is a contract error.
Tensor mlaph_forward(Tape* tape, const Mlaph& head, const Tensor& hidden,
                     const std::vector<int>& mask);

// Per-position vocabulary scores [batch, seq, vocab] through the tied token
// embedding.
Tensor vocab_logits(Tape* tape, const Encoder& encoder, const TokenBatch& batch);

} // namespace ckd::model
