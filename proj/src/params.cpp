#include "nsdehaze/params.hpp"

#include "nsdehaze/error.hpp"

namespace nsd::nets {

void ParamSet::claim(const std::string& name, std::size_t slot, bool is_buffer) {
  if (name.empty()) throw ArgumentError("ParamSet: empty parameter name");
  if (!index_.emplace(name, std::make_pair(is_buffer, slot)).second) {
    throw ArgumentError("ParamSet: duplicate name '" + name + "'");
  }
}

Var ParamSet::add(const std::string& name, Tensor init) {
  claim(name, params_.size(), false);
  params_.push_back({name, ag::parameter(std::move(init))});
  return params_.back().var;
}

void ParamSet::add_buffer(const std::string& name, Tensor init) {
  claim(name, buffers_.size(), true);
  buffers_.push_back({name, std::move(init)});
}

const Var& ParamSet::get(const std::string& name) const {
  const auto it = index_.find(name);
  if (it == index_.end() || it->second.first) throw NotFound("ParamSet: no parameter '" + name + "'");
  return params_[it->second.second].var;
}

Tensor& ParamSet::buffer(const std::string& name) {
  const auto it = index_.find(name);
  if (it == index_.end() || !it->second.first) throw NotFound("ParamSet: no buffer '" + name + "'");
  return buffers_[it->second.second].value;
}

const Tensor& ParamSet::buffer(const std::string& name) const {
  return const_cast<ParamSet*>(this)->buffer(name);
}

std::vector<Var> ParamSet::vars() const {
  std::vector<Var> out;
  out.reserve(params_.size());
  for (const auto& e : params_) out.push_back(e.var);
  return out;
}

std::size_t ParamSet::parameter_count() const {
  std::size_t n = 0;
  for (const auto& e : params_) n += e.var.value().numel();
  return n;
}

void ParamSet::zero_grad() {
  for (auto& e : params_) e.var.zero_grad();
}

void ParamSet::set_trainable(bool on) {
  for (auto& e : params_) e.var.set_requires_grad(on);
}

ParamSet ParamSet::clone() const {
  ParamSet out;
  for (const auto& e : params_) {
    Var v = out.add(e.name, e.var.value());
    v.set_requires_grad(e.var.requires_grad());
  }
  for (const auto& b : buffers_) out.add_buffer(b.name, b.value);
  return out;
}

}  // namespace nsd::nets
