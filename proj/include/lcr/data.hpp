#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "lcr/rng.hpp"
#include "lcr/tensor.hpp"

namespace lcr::data {

struct SearchEvent {
    std::int64_t timestamp = 0;
    std::vector<int> query_words;   // non-empty
    std::vector<int> clicked_items; // may be empty
};

struct RecEvent {
    std::int64_t timestamp = 0;
    int item = 0;
};

struct UserHistory {
    int user = 0;
    std::vector<SearchEvent> search;
    std::vector<RecEvent> rec;
};

struct Catalog {
    int n_users = 0;
    int n_items = 0;
    int n_words = 0;
};

struct Dataset {
    Catalog catalog;
    std::vector<UserHistory> histories;
};

// One prediction context: the user's truncated histories up to (strictly
// before) the target's timestamp. Negatives are drawn at use sites, so the
// instance carries only the positive target. all_rec_items is the user's
// complete rec-item list, kept for negative-sampling exclusion.
struct TrainInstance {
    int user = 0;
    std::vector<SearchEvent> search;
    std::vector<int> rec_items;
    int target = 0;
    std::vector<int> all_rec_items;
};

struct SplitCounts {
    int skipped_users = 0;  // users with too few rec events
    int empty_buckets = 0;  // chronological split only
};

struct Splits {
    std::vector<TrainInstance> train, valid, test;
    SplitCounts counts;
};

struct SynthConfig {
    int n_users = 2000;
    int n_items = 600;
    int n_words = 400;
    int latent_dim = 8;
    double p_relevant = 0.3;  // probability a search event is on the user's interest
    int min_rec = 5, max_rec = 9;
    int min_search = 6, max_search = 12;
    int query_words_min = 2, query_words_max = 4;
    int clicks_min = 0, clicks_max = 3;
    std::uint64_t seed = 1;
};

// Event-log file format: UTF-8, one event per line, tab-separated fields
//   user_id  type(search|rec)  timestamp  item_ids(comma list)  word_ids(comma list)
// rec lines carry exactly one item id and an empty word list; search lines
// carry the clicked items (possibly empty) and a non-empty query word list.
// A sidecar "<path>.header" declares catalog sizes as users=/items=/words= lines.
Dataset load_log(const std::string& path);
void save_log(const std::string& path, const Dataset& ds);

// Per user: last rec event becomes the test target, second-to-last the
// validation target, the rest training targets. Users with fewer than three
// rec events are skipped and counted. Context events strictly precede the
// target's timestamp; histories keep the most recent max_search/max_rec
// events.
Splits leave_one_out_split(const Dataset& ds, int max_search, int max_rec);

// Buckets targets by timestamp: < t_valid train, < t_test validation,
// otherwise test. Context rule and truncation match leave_one_out_split.
Splits chronological_split(const Dataset& ds, std::int64_t t_valid, std::int64_t t_test,
                           int max_search, int max_rec);

// k distinct item ids, none equal to the target and none in the user's rec
// history. Throws ConfigError when the feasible pool is smaller than k.
std::vector<int> sample_negatives(const TrainInstance& inst, const Catalog& cat, int k, Rng& rng);

// Seed-deterministic generator. Every user gets a two-component latent
// interest mixture; the active component persists across consecutive events
// before re-drawing, so recent history tells you what the user is currently
// after. Rec items draw near the active component. Each search event is
// on-interest with probability p_relevant (words and clicks drawn near the
// active component), otherwise drawn from reserved noise pools (the last
// tenth of the item and word id ranges), so ground-truth relevance is
// recoverable from pool membership.
Dataset generate_synthetic(const SynthConfig& cfg);

// First id of the reserved noise range used by generate_synthetic.
int synth_noise_item_start(int n_items);
int synth_noise_word_start(int n_words);
bool synth_event_is_relevant(const SearchEvent& ev, const Catalog& cat);

struct FilterResult {
    Dataset filtered;
    std::int64_t kept_events = 0;
    std::int64_t total_events = 0;
    int passthrough_users = 0;  // users with an empty rec history
};

// Keeps each search event whose embedding has cosine similarity strictly
// above tau with the mean embedding of the user's rec history. tau <= -1
// means keep everything; tau = 1 drops everything (similarity never exceeds
// 1). Users with no rec events pass through unfiltered and are counted.
FilterResult cosine_filter_analysis(
    const Dataset& ds, const std::function<nn::Tensor2(const SearchEvent&)>& embed_event,
    const std::function<nn::Tensor2(const std::vector<RecEvent>&)>& embed_rec_mean, double tau);

}  // namespace lcr::data
