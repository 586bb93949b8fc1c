#pragma once

#include <string>

#include "ecgtcn/container.hpp"
#include "ecgtcn/network.hpp"
#include "ecgtcn/qnetwork.hpp"

namespace ecgtcn {

Container to_container(const Network<float>& net);
Container to_container(const QNetwork& net);

Network<float> float_network_from(const Container& c);
QNetwork qnetwork_from(const Container& c);

void save_model(const std::string& path, const Network<float>& net);
void save_model(const std::string& path, const QNetwork& net);

ArchConfig arch_from_meta(const Container& c);

}  // namespace ecgtcn
