#include "lcr/data.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <sstream>
#include <unordered_set>

namespace lcr::data {

namespace {

std::vector<std::string> split(const std::string& s, char sep) {
    std::vector<std::string> out;
    size_t start = 0;
    while (true) {
        size_t pos = s.find(sep, start);
        if (pos == std::string::npos) {
            out.push_back(s.substr(start));
            break;
        }
        out.push_back(s.substr(start, pos - start));
        start = pos + 1;
    }
    return out;
}

std::int64_t parse_int(const std::string& s, int line_no, const char* what) {
    std::int64_t value = 0;
    auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), value);
    if (ec != std::errc() || ptr != s.data() + s.size())
        throw ParseError("line " + std::to_string(line_no) + ": bad " + what + " '" + s + "'");
    return value;
}

std::vector<int> parse_id_list(const std::string& s, int line_no, const char* what) {
    std::vector<int> out;
    if (s.empty()) return out;
    for (const std::string& tok : split(s, ','))
        out.push_back(static_cast<int>(parse_int(tok, line_no, what)));
    return out;
}

void check_id(int id, int bound, int line_no, const char* what) {
    if (id < 0 || id >= bound)
        throw ValidationError("line " + std::to_string(line_no) + ": " + what + " id " +
                              std::to_string(id) + " outside catalog of " + std::to_string(bound));
}

Catalog load_header(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open header file " + path);
    Catalog cat;
    std::string line;
    int line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty()) continue;
        auto kv = split(line, '=');
        if (kv.size() != 2)
            throw ParseError("header line " + std::to_string(line_no) + ": expected key=value");
        const std::int64_t v = parse_int(kv[1], line_no, "header value");
        if (kv[0] == "users")
            cat.n_users = static_cast<int>(v);
        else if (kv[0] == "items")
            cat.n_items = static_cast<int>(v);
        else if (kv[0] == "words")
            cat.n_words = static_cast<int>(v);
        else
            throw ParseError("header line " + std::to_string(line_no) + ": unknown key '" + kv[0] +
                             "'");
    }
    if (cat.n_users <= 0 || cat.n_items <= 0 || cat.n_words <= 0)
        throw ValidationError("header must declare positive users/items/words counts");
    return cat;
}

}  // namespace

Dataset load_log(const std::string& path) {
    Dataset ds;
    ds.catalog = load_header(path + ".header");
    std::ifstream in(path);
    if (!in) throw IoError("cannot open log file " + path);

    std::vector<UserHistory> by_user(ds.catalog.n_users);
    std::vector<uint8_t> seen(ds.catalog.n_users, 0);
    std::string line;
    int line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty()) continue;
        auto fields = split(line, '\t');
        if (fields.size() != 5)
            throw ParseError("line " + std::to_string(line_no) + ": expected 5 tab-separated fields, got " +
                             std::to_string(fields.size()));
        const int user = static_cast<int>(parse_int(fields[0], line_no, "user id"));
        check_id(user, ds.catalog.n_users, line_no, "user");
        const std::int64_t ts = parse_int(fields[2], line_no, "timestamp");
        const std::vector<int> items = parse_id_list(fields[3], line_no, "item id");
        const std::vector<int> words = parse_id_list(fields[4], line_no, "word id");
        for (int it : items) check_id(it, ds.catalog.n_items, line_no, "item");
        for (int w : words) check_id(w, ds.catalog.n_words, line_no, "word");
        seen[user] = 1;
        if (fields[1] == "search") {
            if (words.empty())
                throw ValidationError("line " + std::to_string(line_no) +
                                      ": search event with empty query");
            SearchEvent ev;
            ev.timestamp = ts;
            ev.query_words = words;
            ev.clicked_items = items;
            by_user[user].search.push_back(std::move(ev));
        } else if (fields[1] == "rec") {
            if (items.size() != 1)
                throw ParseError("line " + std::to_string(line_no) +
                                 ": rec event must carry exactly one item id");
            if (!words.empty())
                throw ParseError("line " + std::to_string(line_no) +
                                 ": rec event must have an empty word list");
            by_user[user].rec.push_back(RecEvent{ts, items[0]});
        } else {
            throw ParseError("line " + std::to_string(line_no) + ": unknown event type '" +
                             fields[1] + "'");
        }
    }

    for (int u = 0; u < ds.catalog.n_users; ++u) {
        if (!seen[u]) continue;
        UserHistory& h = by_user[u];
        h.user = u;
        std::stable_sort(h.search.begin(), h.search.end(),
                         [](const SearchEvent& a, const SearchEvent& b) {
                             return a.timestamp < b.timestamp;
                         });
        std::stable_sort(h.rec.begin(), h.rec.end(),
                         [](const RecEvent& a, const RecEvent& b) {
                             return a.timestamp < b.timestamp;
                         });
        ds.histories.push_back(std::move(h));
    }
    return ds;
}

void save_log(const std::string& path, const Dataset& ds) {
    {
        std::ofstream out(path + ".header");
        if (!out) throw IoError("cannot write header file " + path + ".header");
        out << "users=" << ds.catalog.n_users << "\n"
            << "items=" << ds.catalog.n_items << "\n"
            << "words=" << ds.catalog.n_words << "\n";
    }
    std::ofstream out(path);
    if (!out) throw IoError("cannot write log file " + path);
    auto join = [](const std::vector<int>& ids) {
        std::string s;
        for (size_t i = 0; i < ids.size(); ++i) {
            if (i) s += ',';
            s += std::to_string(ids[i]);
        }
        return s;
    };
    for (const UserHistory& h : ds.histories) {
        for (const SearchEvent& ev : h.search)
            out << h.user << "\tsearch\t" << ev.timestamp << '\t' << join(ev.clicked_items) << '\t'
                << join(ev.query_words) << '\n';
        for (const RecEvent& ev : h.rec)
            out << h.user << "\trec\t" << ev.timestamp << '\t' << ev.item << "\t\n";
    }
}

namespace {

TrainInstance make_instance(const UserHistory& h, int target_idx, int max_search, int max_rec) {
    TrainInstance inst;
    inst.user = h.user;
    inst.target = h.rec[target_idx].item;
    const std::int64_t target_ts = h.rec[target_idx].timestamp;
    for (int t = 0; t < target_idx; ++t)
        if (h.rec[t].timestamp < target_ts) inst.rec_items.push_back(h.rec[t].item);
    if (static_cast<int>(inst.rec_items.size()) > max_rec)
        inst.rec_items.erase(inst.rec_items.begin(),
                             inst.rec_items.end() - max_rec);
    for (const SearchEvent& ev : h.search)
        if (ev.timestamp < target_ts) inst.search.push_back(ev);
    if (static_cast<int>(inst.search.size()) > max_search)
        inst.search.erase(inst.search.begin(), inst.search.end() - max_search);
    for (const RecEvent& ev : h.rec) inst.all_rec_items.push_back(ev.item);
    return inst;
}

}  // namespace

Splits leave_one_out_split(const Dataset& ds, int max_search, int max_rec) {
    Splits sp;
    for (const UserHistory& h : ds.histories) {
        const int n = static_cast<int>(h.rec.size());
        if (n < 3) {
            ++sp.counts.skipped_users;
            continue;
        }
        for (int t = 0; t < n; ++t) {
            TrainInstance inst = make_instance(h, t, max_search, max_rec);
            if (t == n - 1)
                sp.test.push_back(std::move(inst));
            else if (t == n - 2)
                sp.valid.push_back(std::move(inst));
            else
                sp.train.push_back(std::move(inst));
        }
    }
    return sp;
}

Splits chronological_split(const Dataset& ds, std::int64_t t_valid, std::int64_t t_test,
                           int max_search, int max_rec) {
    if (t_valid > t_test) throw ConfigError("chronological split boundaries out of order");
    Splits sp;
    for (const UserHistory& h : ds.histories) {
        for (int t = 0; t < static_cast<int>(h.rec.size()); ++t) {
            TrainInstance inst = make_instance(h, t, max_search, max_rec);
            if (h.rec[t].timestamp < t_valid)
                sp.train.push_back(std::move(inst));
            else if (h.rec[t].timestamp < t_test)
                sp.valid.push_back(std::move(inst));
            else
                sp.test.push_back(std::move(inst));
        }
    }
    if (sp.train.empty()) ++sp.counts.empty_buckets;
    if (sp.valid.empty()) ++sp.counts.empty_buckets;
    if (sp.test.empty()) ++sp.counts.empty_buckets;
    return sp;
}

std::vector<int> sample_negatives(const TrainInstance& inst, const Catalog& cat, int k, Rng& rng) {
    std::unordered_set<int> excluded(inst.all_rec_items.begin(), inst.all_rec_items.end());
    excluded.insert(inst.target);
    int feasible = cat.n_items;
    for (int id : excluded)
        if (id >= 0 && id < cat.n_items) --feasible;
    if (k > feasible)
        throw ConfigError("cannot sample " + std::to_string(k) + " negatives from a pool of " +
                          std::to_string(feasible));

    std::vector<int> out;
    out.reserve(k);
    if (k * 2 <= feasible) {
        std::unordered_set<int> chosen;
        while (static_cast<int>(out.size()) < k) {
            const int id = static_cast<int>(rng.below(static_cast<uint64_t>(cat.n_items)));
            if (excluded.count(id) || chosen.count(id)) continue;
            chosen.insert(id);
            out.push_back(id);
        }
    } else {
        // Dense request: enumerate the pool and take a k-prefix shuffle.
        std::vector<int> pool;
        pool.reserve(feasible);
        for (int id = 0; id < cat.n_items; ++id)
            if (!excluded.count(id)) pool.push_back(id);
        for (int i = 0; i < k; ++i) {
            const int j = i + static_cast<int>(rng.below(static_cast<uint64_t>(pool.size() - i)));
            std::swap(pool[i], pool[j]);
            out.push_back(pool[i]);
        }
    }
    return out;
}

int synth_noise_item_start(int n_items) { return n_items - n_items / 10; }
int synth_noise_word_start(int n_words) { return n_words - n_words / 10; }

bool synth_event_is_relevant(const SearchEvent& ev, const Catalog& cat) {
    if (ev.query_words.empty()) return false;
    return ev.query_words[0] < synth_noise_word_start(cat.n_words);
}

namespace {

std::vector<double> unit_vector(int dim, Rng& rng) {
    std::vector<double> v(dim);
    double norm = 0.0;
    do {
        norm = 0.0;
        for (double& x : v) {
            x = rng.normal();
            norm += x * x;
        }
    } while (norm < 1e-12);
    norm = std::sqrt(norm);
    for (double& x : v) x /= norm;
    return v;
}

// Draws one index from softmax(alpha * <z, latents[i]>) over [0, latents.size()).
int draw_by_interest(const std::vector<double>& z, const std::vector<std::vector<double>>& latents,
                     double alpha, Rng& rng) {
    const int n = static_cast<int>(latents.size());
    std::vector<double> w(n);
    double total = 0.0;
    for (int i = 0; i < n; ++i) {
        double dot = 0.0;
        for (size_t j = 0; j < z.size(); ++j) dot += z[j] * latents[i][j];
        w[i] = std::exp(alpha * dot);
        total += w[i];
    }
    double u = rng.uniform() * total;
    for (int i = 0; i < n; ++i) {
        u -= w[i];
        if (u <= 0.0) return i;
    }
    return n - 1;
}

}  // namespace

Dataset generate_synthetic(const SynthConfig& cfg) {
    if (cfg.n_users <= 0 || cfg.n_items < 20 || cfg.n_words < 20)
        throw ValidationError("synthetic config needs positive users and at least 20 items/words");
    if (cfg.p_relevant < 0.0 || cfg.p_relevant > 1.0)
        throw ValidationError("p_relevant must lie in [0,1]");
    if (cfg.latent_dim <= 0) throw ValidationError("latent_dim must be positive");
    if (cfg.min_rec < 1 || cfg.min_rec > cfg.max_rec || cfg.min_search < 0 ||
        cfg.min_search > cfg.max_search || cfg.query_words_min < 1 ||
        cfg.query_words_min > cfg.query_words_max || cfg.clicks_min < 0 ||
        cfg.clicks_min > cfg.clicks_max)
        throw ValidationError("synthetic length ranges are inconsistent");
    // Queries are sets of distinct words, so both the noise pool and the
    // signal pool must be at least as large as the longest query.
    if (cfg.n_words - synth_noise_word_start(cfg.n_words) < cfg.query_words_max ||
        synth_noise_word_start(cfg.n_words) < cfg.query_words_max)
        throw ValidationError("word vocabulary too small for the query length range");

    // How sharply users concentrate on their interest direction. Large enough
    // that a user's rec stream is clearly topical, small enough that targets
    // are not a single repeated item.
    const double alpha = 6.0;

    Dataset ds;
    ds.catalog = {cfg.n_users, cfg.n_items, cfg.n_words};
    const int noise_item0 = synth_noise_item_start(cfg.n_items);
    const int noise_word0 = synth_noise_word_start(cfg.n_words);

    Rng rng(mix_seed(cfg.seed, 0x5eedULL));
    std::vector<std::vector<double>> item_lat(noise_item0), word_lat(noise_word0);
    for (int i = 0; i < noise_item0; ++i) item_lat[i] = unit_vector(cfg.latent_dim, rng);
    for (int w = 0; w < noise_word0; ++w) word_lat[w] = unit_vector(cfg.latent_dim, rng);

    for (int u = 0; u < cfg.n_users; ++u) {
        UserHistory h;
        h.user = u;
        // A user's interest is a two-component mixture, and the component
        // driving events persists across consecutive interactions before
        // re-drawing from the user's base rates. Long-run frequencies still
        // follow w_a, but which component is active right now is only
        // readable from recent history, not from the user's identity.
        const std::vector<double> z_a = unit_vector(cfg.latent_dim, rng);
        const std::vector<double> z_b = unit_vector(cfg.latent_dim, rng);
        const double w_a = rng.uniform(0.3, 0.7);
        const double persist = 0.85;
        const std::vector<double>* active = rng.uniform() < w_a ? &z_a : &z_b;
        const auto advance_interest = [&]() {
            if (rng.uniform() >= persist) active = rng.uniform() < w_a ? &z_a : &z_b;
        };
        const int n_rec = rng.range(cfg.min_rec, cfg.max_rec);
        const int n_search = rng.range(cfg.min_search, cfg.max_search);

        // Interleave the two streams: a shuffled S/R pattern assigns each
        // event its global timestamp while preserving intra-stream order.
        std::vector<uint8_t> pattern(n_search + n_rec, 0);
        for (int i = 0; i < n_rec; ++i) pattern[n_search + i] = 1;
        for (int i = static_cast<int>(pattern.size()) - 1; i > 0; --i) {
            const int j = static_cast<int>(rng.below(static_cast<uint64_t>(i + 1)));
            std::swap(pattern[i], pattern[j]);
        }

        std::int64_t ts = 0;
        for (uint8_t is_rec : pattern) {
            ++ts;
            advance_interest();
            if (is_rec) {
                h.rec.push_back(RecEvent{ts, draw_by_interest(*active, item_lat, alpha, rng)});
                continue;
            }
            SearchEvent ev;
            ev.timestamp = ts;
            const bool relevant = rng.uniform() < cfg.p_relevant;
            const int n_q = rng.range(cfg.query_words_min, cfg.query_words_max);
            const int n_c = rng.range(cfg.clicks_min, cfg.clicks_max);
            if (relevant) {
                // One component per event: queries are about one thing.
                const std::vector<double>& z = *active;
                while (static_cast<int>(ev.query_words.size()) < n_q) {
                    const int w = draw_by_interest(z, word_lat, alpha, rng);
                    if (std::find(ev.query_words.begin(), ev.query_words.end(), w) ==
                        ev.query_words.end())
                        ev.query_words.push_back(w);
                }
                for (int c = 0; c < n_c; ++c)
                    ev.clicked_items.push_back(draw_by_interest(z, item_lat, alpha, rng));
            } else {
                while (static_cast<int>(ev.query_words.size()) < n_q) {
                    const int w = noise_word0 + static_cast<int>(rng.below(
                                                    static_cast<uint64_t>(cfg.n_words - noise_word0)));
                    if (std::find(ev.query_words.begin(), ev.query_words.end(), w) ==
                        ev.query_words.end())
                        ev.query_words.push_back(w);
                }
                for (int c = 0; c < n_c; ++c)
                    ev.clicked_items.push_back(
                        noise_item0 +
                        static_cast<int>(rng.below(static_cast<uint64_t>(cfg.n_items - noise_item0))));
            }
            h.search.push_back(std::move(ev));
        }
        ds.histories.push_back(std::move(h));
    }
    return ds;
}

FilterResult cosine_filter_analysis(
    const Dataset& ds, const std::function<nn::Tensor2(const SearchEvent&)>& embed_event,
    const std::function<nn::Tensor2(const std::vector<RecEvent>&)>& embed_rec_mean, double tau) {
    FilterResult res;
    res.filtered.catalog = ds.catalog;
    for (const UserHistory& h : ds.histories) {
        UserHistory out;
        out.user = h.user;
        out.rec = h.rec;
        res.total_events += static_cast<std::int64_t>(h.search.size());
        if (h.rec.empty()) {
            ++res.passthrough_users;
            out.search = h.search;
            res.kept_events += static_cast<std::int64_t>(h.search.size());
            res.filtered.histories.push_back(std::move(out));
            continue;
        }
        const nn::Tensor2 anchor = embed_rec_mean(h.rec);
        for (const SearchEvent& ev : h.search) {
            // tau at the lower bound means "keep everything", including the
            // measure-zero case of similarity exactly -1.
            const bool keep =
                tau <= -1.0 || nn::cosine_similarity(embed_event(ev), anchor) > tau;
            if (keep) {
                out.search.push_back(ev);
                ++res.kept_events;
            }
        }
        res.filtered.histories.push_back(std::move(out));
    }
    return res;
}

}  // namespace lcr::data
