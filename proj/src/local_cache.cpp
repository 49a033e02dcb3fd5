#include "flexkv/local_cache.hpp"

namespace flexkv {

std::size_t CacheEntry::bytes() const {
  std::size_t b = kCacheEntryOverhead + key.size();
  if (auto* v = std::get_if<CachedValue>(&payload)) b += v->value.size();
  return b;
}

void LocalCache::set_capacity(std::size_t bytes) {
  capacity_ = bytes;
  evict_to_fit();
}

CacheEntry* LocalCache::find(const std::string& key) {
  auto it = index_.find(key);
  return it == index_.end() ? nullptr : &*it->second;
}

const CacheEntry* LocalCache::find(const std::string& key) const {
  auto it = index_.find(key);
  return it == index_.end() ? nullptr : &*it->second;
}

bool LocalCache::put(CacheEntry entry) {
  erase(entry.key);
  std::size_t b = entry.bytes();
  if (b > capacity_) return false;
  fifo_.push_back(std::move(entry));
  auto it = std::prev(fifo_.end());
  index_.emplace(it->key, it);
  resident_ += b;
  evict_to_fit();
  return true;
}

bool LocalCache::erase(const std::string& key) {
  auto it = index_.find(key);
  if (it == index_.end()) return false;
  resident_ -= it->second->bytes();
  fifo_.erase(it->second);
  index_.erase(it);
  return true;
}

void LocalCache::clear() {
  fifo_.clear();
  index_.clear();
  resident_ = 0;
}

std::size_t LocalCache::erase_if(const std::function<bool(const CacheEntry&)>& pred) {
  std::size_t n = 0;
  for (auto it = fifo_.begin(); it != fifo_.end();) {
    if (pred(*it)) {
      resident_ -= it->bytes();
      index_.erase(it->key);
      it = fifo_.erase(it);
      ++n;
    } else {
      ++it;
    }
  }
  return n;
}

void LocalCache::evict_to_fit() {
  while (resident_ > capacity_ && !fifo_.empty()) {
    resident_ -= fifo_.front().bytes();
    index_.erase(fifo_.front().key);
    fifo_.pop_front();
    ++evictions_;
  }
}

}  // namespace flexkv
