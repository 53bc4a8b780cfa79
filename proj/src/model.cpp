#include "lcr/model.hpp"

#include <algorithm>
#include <set>

namespace lcr::model {

namespace {
void validate_config(const ModelConfig& cfg) {
    if (cfg.d <= 0 || cfg.heads <= 0 || cfg.d % cfg.heads != 0)
        throw ConfigError("model width must be positive and divisible by the head count");
    if (cfg.encoder_layers < 1) throw ConfigError("encoder_layers must be at least 1");
    if (cfg.K < 0) throw ConfigError("reasoning step count K must be non-negative");
    if (cfg.max_search < 1 || cfg.max_rec < 1)
        throw ConfigError("history caps must be positive");
    if (cfg.n_users <= 0 || cfg.n_items <= 0 || cfg.n_words <= 0)
        throw ConfigError("catalog sizes must be positive");
}

const char* side_tag(int side) { return side == Model::kSearch ? "s" : "r"; }
}  // namespace

Model Model::create(const ModelConfig& cfg, nn::ParamStore& ps, Rng& rng) {
    validate_config(cfg);
    Model m;
    m.cfg_ = cfg;
    m.user_table_ = "emb.user";
    m.item_table_ = "emb.item";
    m.word_table_ = "emb.word";
    ps.create(m.user_table_, cfg.n_users, cfg.d, rng, 0.02);
    ps.create(m.item_table_, cfg.n_items, cfg.d, rng, 0.02);
    ps.create(m.word_table_, cfg.n_words, cfg.d, rng, 0.02);

    for (int s : {kSearch, kRec}) {
        Side& sd = m.side_[s];
        const std::string base = std::string("enc.") + side_tag(s);
        sd.pos = base + ".pos";
        ps.create(sd.pos, s == kSearch ? cfg.max_search : cfg.max_rec, cfg.d, rng, 0.02);
        for (int l = 0; l < cfg.encoder_layers; ++l) {
            const std::string lb = base + ".l" + std::to_string(l);
            sd.msa.push_back(nn::make_attention(ps, lb + ".msa", cfg.d, cfg.heads, rng));
            sd.ffn.push_back(nn::make_ffn(ps, lb + ".ffn", cfg.d, cfg.ffn_hidden_resolved(), rng));
        }
    }
    if (cfg.K > 0) {
        for (int s : {kSearch, kRec}) {
            Side& sd = m.side_[s];
            const std::string base = std::string("reason.") + side_tag(s);
            sd.step_pos = base + ".step_pos";
            ps.create(sd.step_pos, cfg.K, cfg.d, rng, 0.02);
            sd.mca = nn::make_attention(ps, base + ".mca", cfg.d, cfg.heads, rng);
        }
    }
    ps.create("head.w1", 4 * cfg.d, 2 * cfg.d, rng, 0.02);
    ps.create("head.b1", 1, 2 * cfg.d, rng, 0.0);
    ps.create("head.w2", 2 * cfg.d, cfg.d, rng, 0.02);
    ps.create("head.b2", 1, cfg.d, rng, 0.0);
    ps.create("head.w3", cfg.d, 1, rng, 0.02);
    ps.create("head.b3", 1, 1, rng, 0.0);
    m.head_ = Head{"head.w1", "head.b1", "head.w2", "head.b2", "head.w3", "head.b3"};
    if (cfg.learned_agg) {
        for (int s : {kSearch, kRec}) {
            Side& sd = m.side_[s];
            const std::string base = std::string("agg.") + side_tag(s);
            sd.agg_q = base + ".wq";
            sd.agg_k = base + ".wk";
            sd.agg_v = base + ".wv";
            ps.create(sd.agg_q, cfg.d, cfg.d, rng, 0.02);
            ps.create(sd.agg_k, cfg.d, cfg.d, rng, 0.02);
            ps.create(sd.agg_v, cfg.d, cfg.d, rng, 0.02);
        }
    }
    return m;
}

Model Model::attach(const ModelConfig& cfg, const nn::ParamStore& ps) {
    validate_config(cfg);
    Model m;
    m.cfg_ = cfg;
    m.user_table_ = "emb.user";
    m.item_table_ = "emb.item";
    m.word_table_ = "emb.word";

    std::set<std::string> expected;
    auto expect = [&](const std::string& name, int rows, int cols) {
        expected.insert(name);
        if (!ps.has(name)) throw StateError("checkpoint is missing parameter " + name);
        const nn::Tensor2& t = ps.value(name);
        if (t.rows != rows || t.cols != cols)
            throw ConfigError("parameter " + name + " has shape " + std::to_string(t.rows) + "x" +
                              std::to_string(t.cols) + ", expected " + std::to_string(rows) + "x" +
                              std::to_string(cols));
    };

    expect(m.user_table_, cfg.n_users, cfg.d);
    expect(m.item_table_, cfg.n_items, cfg.d);
    expect(m.word_table_, cfg.n_words, cfg.d);
    for (int s : {kSearch, kRec}) {
        Side& sd = m.side_[s];
        const std::string base = std::string("enc.") + side_tag(s);
        sd.pos = base + ".pos";
        expect(sd.pos, s == kSearch ? cfg.max_search : cfg.max_rec, cfg.d);
        for (int l = 0; l < cfg.encoder_layers; ++l) {
            const std::string lb = base + ".l" + std::to_string(l);
            sd.msa.push_back(nn::attach_attention(ps, lb + ".msa", cfg.d, cfg.heads));
            sd.ffn.push_back(nn::attach_ffn(ps, lb + ".ffn", cfg.d, cfg.ffn_hidden_resolved()));
            for (const std::string& n :
                 {sd.msa.back().wq, sd.msa.back().wk, sd.msa.back().wv, sd.msa.back().wo,
                  sd.ffn.back().w1, sd.ffn.back().b1, sd.ffn.back().w2, sd.ffn.back().b2})
                expected.insert(n);
        }
        if (cfg.K > 0) {
            const std::string rbase = std::string("reason.") + side_tag(s);
            sd.step_pos = rbase + ".step_pos";
            expect(sd.step_pos, cfg.K, cfg.d);
            sd.mca = nn::attach_attention(ps, rbase + ".mca", cfg.d, cfg.heads);
            for (const std::string& n : {sd.mca.wq, sd.mca.wk, sd.mca.wv, sd.mca.wo})
                expected.insert(n);
        }
        if (cfg.learned_agg) {
            const std::string abase = std::string("agg.") + side_tag(s);
            sd.agg_q = abase + ".wq";
            sd.agg_k = abase + ".wk";
            sd.agg_v = abase + ".wv";
            expect(sd.agg_q, cfg.d, cfg.d);
            expect(sd.agg_k, cfg.d, cfg.d);
            expect(sd.agg_v, cfg.d, cfg.d);
        }
    }
    expect("head.w1", 4 * cfg.d, 2 * cfg.d);
    expect("head.b1", 1, 2 * cfg.d);
    expect("head.w2", 2 * cfg.d, cfg.d);
    expect("head.b2", 1, cfg.d);
    expect("head.w3", cfg.d, 1);
    expect("head.b3", 1, 1);
    m.head_ = Head{"head.w1", "head.b1", "head.w2", "head.b2", "head.w3", "head.b3"};

    for (const std::string& name : ps.names())
        if (!expected.count(name))
            throw ConfigError("parameter store holds unexpected parameter " + name);
    return m;
}

}  // namespace lcr::model
