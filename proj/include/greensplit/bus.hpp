#pragma once

#include <chrono>
#include <condition_variable>
#include <cstdint>
#include <deque>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <shared_mutex>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

namespace greensplit {

/// Slash-separated topic path. Segment names are [a-z0-9_]+; '*' is legal
/// only as the final segment of a subscription pattern, where it matches
/// any nonempty tail.
struct Topic {
    std::vector<std::string> segments;

    static bool valid_segment(const std::string& s) {
        if (s.empty()) return false;
        for (char c : s)
            if (!((c >= 'a' && c <= 'z') || (c >= '0' && c <= '9') || c == '_')) return false;
        return true;
    }

    static Topic parse(const std::string& text, bool allow_trailing_wildcard) {
        Topic t;
        std::string seg;
        auto flush = [&] {
            t.segments.push_back(seg);
            seg.clear();
        };
        for (char c : text) {
            if (c == '/')
                flush();
            else
                seg += c;
        }
        flush();
        if (t.segments.empty()) throw std::invalid_argument("topic: empty");
        for (std::size_t i = 0; i < t.segments.size(); ++i) {
            const std::string& s = t.segments[i];
            const bool last = i + 1 == t.segments.size();
            if (s == "*") {
                if (!allow_trailing_wildcard || !last)
                    throw std::invalid_argument("topic '" + text + "': wildcard only allowed as trailing pattern segment");
                continue;
            }
            if (!valid_segment(s))
                throw std::invalid_argument("topic '" + text + "': segment '" + s + "' must match [a-z0-9_]+");
        }
        return t;
    }

    bool has_wildcard() const { return !segments.empty() && segments.back() == "*"; }

    std::string str() const {
        std::string s;
        for (std::size_t i = 0; i < segments.size(); ++i) {
            if (i) s += '/';
            s += segments[i];
        }
        return s;
    }

    /// Pattern match: literal patterns match exactly; a trailing '*'
    /// matches one or more remaining segments.
    static bool matches(const Topic& pattern, const Topic& topic) {
        const std::size_t np = pattern.segments.size();
        if (pattern.has_wildcard()) {
            if (topic.segments.size() < np) return false;
            for (std::size_t i = 0; i + 1 < np; ++i)
                if (pattern.segments[i] != topic.segments[i]) return false;
            return true;
        }
        return pattern.segments == topic.segments;
    }
};

struct BusMessage {
    Topic topic;
    nlohmann::json payload;
    std::string publisher_id;
    std::uint64_t seq = 0; ///< per-publisher monotone counter
    double ts = 0.0;       ///< scenario clock seconds
};

struct BusStats {
    std::map<std::string, std::uint64_t> published_by_topic;
    std::uint64_t published_total = 0;
    std::uint64_t delivered_total = 0;
    std::uint64_t dropped_total = 0;
};

/// Field-level payload check for one topic family (first segment).
struct PayloadSchema {
    /// field name -> expected json type name ("number", "integer", "string",
    /// "boolean", "array_number"). Payloads must carry exactly these fields.
    std::map<std::string, std::string> fields;

    void check(const nlohmann::json& payload, const std::string& topic) const {
        if (!payload.is_object())
            throw std::invalid_argument("payload for '" + topic + "' must be an object");
        for (const auto& [name, type] : fields) {
            if (!payload.contains(name))
                throw std::invalid_argument("payload for '" + topic + "' missing field '" + name + "'");
            const auto& v = payload.at(name);
            bool ok = false;
            if (type == "number")
                ok = v.is_number();
            else if (type == "integer")
                ok = v.is_number_integer();
            else if (type == "string")
                ok = v.is_string();
            else if (type == "boolean")
                ok = v.is_boolean();
            else if (type == "array_number") {
                ok = v.is_array();
                if (ok)
                    for (const auto& e : v) ok = ok && e.is_number();
            }
            if (!ok)
                throw std::invalid_argument("payload for '" + topic + "': field '" + name + "' must be " + type);
        }
        for (const auto& [key, value] : payload.items()) {
            (void)value;
            if (!fields.count(key))
                throw std::invalid_argument("payload for '" + topic + "': unexpected field '" + key + "'");
        }
    }
};

class Bus;

/// Receiving end of a subscription. Messages queue up to the capacity
/// given at subscribe time; on overflow the oldest message is dropped and
/// counted. poll() returns nullopt once the subscription is closed and
/// drained (or cancelled).
class Subscription {
public:
    Subscription() = default;

    std::optional<BusMessage> poll(std::chrono::milliseconds timeout = std::chrono::milliseconds(0)) {
        if (!state_) return std::nullopt;
        std::unique_lock lock(state_->mutex);
        if (timeout.count() > 0)
            state_->cv.wait_for(lock, timeout, [&] { return !state_->queue.empty() || state_->closed; });
        else
            state_->cv.wait(lock, [&] { return !state_->queue.empty() || state_->closed; });
        if (state_->queue.empty()) return std::nullopt;
        BusMessage msg = std::move(state_->queue.front());
        state_->queue.pop_front();
        return msg;
    }

    std::optional<BusMessage> try_poll() {
        if (!state_) return std::nullopt;
        std::lock_guard lock(state_->mutex);
        if (state_->queue.empty()) return std::nullopt;
        BusMessage msg = std::move(state_->queue.front());
        state_->queue.pop_front();
        return msg;
    }

    /// Move everything queued into out; blocks until at least one message
    /// arrives or the subscription closes. Returns the number appended.
    std::size_t drain(std::vector<BusMessage>& out) {
        if (!state_) return 0;
        std::unique_lock lock(state_->mutex);
        state_->cv.wait(lock, [&] { return !state_->queue.empty() || state_->closed; });
        const std::size_t count = state_->queue.size();
        for (auto& m : state_->queue) out.push_back(std::move(m));
        state_->queue.clear();
        return count;
    }

    /// Stop receiving immediately; queued messages are discarded.
    void cancel();

    std::uint64_t dropped() const {
        if (!state_) return 0;
        std::lock_guard lock(state_->mutex);
        return state_->drops;
    }

    bool active() const { return state_ != nullptr; }

private:
    friend class Bus;
    struct State {
        Topic pattern;
        std::size_t capacity = 1024;
        mutable std::mutex mutex;
        std::condition_variable cv;
        std::deque<BusMessage> queue;
        std::uint64_t drops = 0;
        bool closed = false;
        std::uint64_t id = 0;
    };
    explicit Subscription(std::shared_ptr<State> s, Bus* bus) : state_(std::move(s)), bus_(bus) {}
    std::shared_ptr<State> state_;
    Bus* bus_ = nullptr;
};

/// In-process topic bus. Publishers never block on slow subscribers: each
/// subscription owns a bounded queue with drop-oldest overflow. Delivery
/// is fan-out at publish time to every pattern that matches; there is no
/// retention, so late subscribers see only subsequent messages.
class Bus {
public:
    Bus() { register_standard_schemas(); }

    Subscription subscribe(const std::string& pattern, std::size_t queue_capacity = 1024) {
        if (queue_capacity == 0) throw std::invalid_argument("subscribe: capacity must be > 0");
        auto state = std::make_shared<Subscription::State>();
        state->pattern = Topic::parse(pattern, true);
        state->capacity = queue_capacity;
        std::unique_lock lock(registry_mutex_);
        state->id = next_subscription_id_++;
        if (shutdown_) state->closed = true;
        subscriptions_.push_back(state);
        return Subscription(std::move(state), this);
    }

    /// Deliver msg to every live matching subscription. Throws on wildcard
    /// topics and on schema violations; a clean return acknowledges.
    void publish(const BusMessage& msg) {
        if (msg.topic.segments.empty()) throw std::invalid_argument("publish: empty topic");
        if (msg.topic.has_wildcard())
            throw std::invalid_argument("publish: wildcard not allowed in publication topic '" + msg.topic.str() + "'");
        for (const auto& seg : msg.topic.segments)
            if (!Topic::valid_segment(seg))
                throw std::invalid_argument("publish: bad topic segment '" + seg + "'");
        {
            std::shared_lock lock(schema_mutex_);
            auto it = schemas_.find(msg.topic.segments.front());
            if (it != schemas_.end()) it->second.check(msg.payload, msg.topic.str());
        }

        std::uint64_t delivered = 0;
        std::uint64_t dropped = 0;
        {
            std::shared_lock lock(registry_mutex_);
            for (const auto& sub : subscriptions_) {
                if (!Topic::matches(sub->pattern, msg.topic)) continue;
                std::lock_guard qlock(sub->mutex);
                if (sub->closed) continue;
                if (sub->queue.size() >= sub->capacity) {
                    sub->queue.pop_front(); // drop-oldest: fresh data beats history
                    ++sub->drops;
                    ++dropped;
                }
                sub->queue.push_back(msg);
                ++delivered;
                sub->cv.notify_one();
            }
        }
        std::lock_guard slock(stats_mutex_);
        ++stats_.published_by_topic[msg.topic.str()];
        ++stats_.published_total;
        stats_.delivered_total += delivered;
        stats_.dropped_total += dropped;
    }

    void register_schema(const std::string& family, PayloadSchema schema) {
        std::unique_lock lock(schema_mutex_);
        schemas_[family] = std::move(schema);
    }

    /// Graceful close: subscribers drain what is queued, then see
    /// end-of-stream. Further publishes deliver to nobody.
    void shutdown() {
        std::unique_lock lock(registry_mutex_);
        shutdown_ = true;
        for (const auto& sub : subscriptions_) {
            std::lock_guard qlock(sub->mutex);
            sub->closed = true;
            sub->cv.notify_all();
        }
    }

    BusStats stats() const {
        std::lock_guard lock(stats_mutex_);
        return stats_;
    }

private:
    friend class Subscription;

    void remove(std::uint64_t id) {
        std::unique_lock lock(registry_mutex_);
        for (auto it = subscriptions_.begin(); it != subscriptions_.end(); ++it) {
            if ((*it)->id == id) {
                subscriptions_.erase(it);
                return;
            }
        }
    }

    void register_standard_schemas() {
        register_schema("traffic_flows", PayloadSchema{{
                                             {"t", "integer"},
                                             {"flow_veh_per_interval", "number"},
                                             {"approach_id", "string"},
                                         }});
        register_schema("predicted_flows", PayloadSchema{{
                                               {"t", "integer"},
                                               {"horizon_steps", "integer"},
                                               {"forecasts", "array_number"},
                                               {"approach_id", "string"},
                                           }});
        register_schema("traffic_signal_decisions", PayloadSchema{{
                                                        {"cycle_start_t_s", "number"},
                                                        {"greens_s", "array_number"},
                                                        {"cycle_length_s", "number"},
                                                        {"cost_estimate_s", "number"},
                                                    }});
        register_schema("traffic_signal_status", PayloadSchema{{
                                                     {"applied", "boolean"},
                                                     {"greens_s", "array_number"},
                                                     {"reason", "string"},
                                                 }});
    }

    mutable std::shared_mutex registry_mutex_;
    std::vector<std::shared_ptr<Subscription::State>> subscriptions_;
    std::uint64_t next_subscription_id_ = 1;
    bool shutdown_ = false;

    std::shared_mutex schema_mutex_;
    std::map<std::string, PayloadSchema> schemas_;

    mutable std::mutex stats_mutex_;
    BusStats stats_;
};

inline void Subscription::cancel() {
    if (!state_) return;
    {
        std::lock_guard lock(state_->mutex);
        state_->closed = true;
        state_->queue.clear();
        state_->cv.notify_all();
    }
    if (bus_) bus_->remove(state_->id);
    state_.reset();
    bus_ = nullptr;
}

/// Stamps publisher identity and the per-publisher sequence counter.
class Publisher {
public:
    Publisher(Bus& bus, std::string id) : bus_(&bus), id_(std::move(id)) {}

    void publish(const std::string& topic, nlohmann::json payload, double ts) {
        BusMessage msg;
        msg.topic = Topic::parse(topic, false);
        msg.payload = std::move(payload);
        msg.publisher_id = id_;
        msg.seq = ++seq_;
        msg.ts = ts;
        bus_->publish(msg);
    }

    const std::string& id() const { return id_; }

private:
    Bus* bus_;
    std::string id_;
    std::uint64_t seq_ = 0;
};

} // namespace greensplit
