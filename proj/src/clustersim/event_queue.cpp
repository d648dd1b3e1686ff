#include "udi/clustersim/event_queue.hpp"

#include <stdexcept>

namespace udi {

void EventQueue::schedule(Timestamp at, Action action, bool daemon) {
    if (at < now()) throw std::logic_error("event scheduled in the past");
    if (!daemon) ++work_pending_;
    queue_.push(Event{at, next_seq_++, daemon, std::move(action)});
}

void EventQueue::run_one() {
    auto event = queue_.top();
    queue_.pop();
    clock_.set(event.at);
    if (!event.daemon) --work_pending_;
    ++executed_;
    event.action();
}

void EventQueue::run() {
    while (work_pending_ > 0) run_one();
}

void EventQueue::run_until(Timestamp until) {
    while (!queue_.empty() && queue_.top().at <= until) run_one();
    if (until > now()) clock_.set(until);
}

void Trace::add(Timestamp at, const std::string& entity, const std::string& event, const std::string& details) {
    if (!enabled_) return;
    std::string line = format_seconds(at);
    line += '\t';
    line += entity;
    line += '\t';
    line += event;
    line += '\t';
    line += details;
    lines_.push_back(std::move(line));
}

void Trace::append(const Trace& other) { lines_.insert(lines_.end(), other.lines_.begin(), other.lines_.end()); }

std::string Trace::text() const {
    std::string out;
    for (const auto& l : lines_) {
        out += l;
        out += '\n';
    }
    return out;
}

std::size_t Trace::count(const std::string& event) const {
    std::size_t n = 0;
    for (const auto& l : lines_) {
        auto a = l.find('\t');
        auto b = l.find('\t', a + 1);
        auto c = l.find('\t', b + 1);
        if (a != std::string::npos && b != std::string::npos && l.compare(b + 1, c - b - 1, event) == 0) ++n;
    }
    return n;
}

}  // namespace udi
