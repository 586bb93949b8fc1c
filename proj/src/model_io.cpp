#include "ecgtcn/model_io.hpp"

#include <cstring>
#include <sstream>

namespace ecgtcn {

namespace {

std::string fmt_float(double v) {
    std::ostringstream os;
    os.precision(9);
    os << v;
    return os.str();
}

void put_arch_meta(Container& c, const ArchConfig& cfg) {
    c.meta["input_len"] = std::to_string(cfg.input_len);
    c.meta["entry_filters"] = std::to_string(cfg.entry_filters);
    c.meta["block_filters"] = std::to_string(cfg.block_filters);
    c.meta["kernel_len"] = std::to_string(cfg.kernel_len);
    c.meta["num_blocks"] = std::to_string(cfg.num_blocks);
    c.meta["n_classes"] = std::to_string(cfg.n_classes);
    c.meta["dropout_p"] = fmt_float(cfg.dropout_p);
    c.meta["bn_eps"] = fmt_float(cfg.bn_eps);
    c.meta["bn_momentum"] = fmt_float(cfg.bn_momentum);
}

// Conv weight tensors are stored (out, in, K) with (c, i, k) raster order,
// matching the int8 engine layout.
std::vector<float> conv_w_raster(const Conv1d<float>& conv) {
    std::vector<float> buf(static_cast<std::size_t>(conv.w.size()));
    for (int c = 0; c < conv.out_ch; ++c) {
        for (int i = 0; i < conv.in_ch; ++i) {
            for (int k = 0; k < conv.kernel_len; ++k) {
                buf[static_cast<std::size_t>((c * conv.in_ch + i) * conv.kernel_len + k)] =
                    conv.w(c, k * conv.in_ch + i);
            }
        }
    }
    return buf;
}

void conv_w_from_raster(Conv1d<float>& conv, const float* buf) {
    for (int c = 0; c < conv.out_ch; ++c) {
        for (int i = 0; i < conv.in_ch; ++i) {
            for (int k = 0; k < conv.kernel_len; ++k) {
                conv.w(c, k * conv.in_ch + i) =
                    buf[static_cast<std::size_t>((c * conv.in_ch + i) * conv.kernel_len + k)];
            }
        }
    }
}

void push_conv(Container& c, const std::string& name, const Conv1d<float>& conv) {
    const auto w = conv_w_raster(conv);
    c.tensors.push_back(TensorBlob::from_f32(
        name + ".w",
        {static_cast<std::uint32_t>(conv.out_ch), static_cast<std::uint32_t>(conv.in_ch),
         static_cast<std::uint32_t>(conv.kernel_len)},
        w.data()));
    c.tensors.push_back(TensorBlob::from_f32(
        name + ".b", {static_cast<std::uint32_t>(conv.out_ch)}, conv.b.data()));
}

void push_bn(Container& c, const std::string& name, const BatchNorm<float>& bn) {
    const auto n = static_cast<std::uint32_t>(bn.gamma.size());
    c.tensors.push_back(TensorBlob::from_f32(name + ".gamma", {n}, bn.gamma.data()));
    c.tensors.push_back(TensorBlob::from_f32(name + ".beta", {n}, bn.beta.data()));
    c.tensors.push_back(TensorBlob::from_f32(name + ".mean", {n}, bn.running_mean.data()));
    c.tensors.push_back(TensorBlob::from_f32(name + ".var", {n}, bn.running_var.data()));
}

void load_conv(const Container& c, const std::string& name, Conv1d<float>& conv) {
    conv_w_from_raster(conv, c.tensor(name + ".w").as_f32());
    std::memcpy(conv.b.data(), c.tensor(name + ".b").as_f32(),
                static_cast<std::size_t>(conv.b.size()) * 4);
}

void load_bn(const Container& c, const std::string& name, BatchNorm<float>& bn) {
    const auto n = static_cast<std::size_t>(bn.gamma.size()) * 4;
    std::memcpy(bn.gamma.data(), c.tensor(name + ".gamma").as_f32(), n);
    std::memcpy(bn.beta.data(), c.tensor(name + ".beta").as_f32(), n);
    std::memcpy(bn.running_mean.data(), c.tensor(name + ".mean").as_f32(), n);
    std::memcpy(bn.running_var.data(), c.tensor(name + ".var").as_f32(), n);
}

void push_qp(Container& c, const std::string& prefix, const QuantParams& qp) {
    c.tensors.push_back(TensorBlob::from_f32(prefix + ".scale", {1}, &qp.scale));
    const std::int32_t zp = qp.zero_point;
    c.tensors.push_back(TensorBlob::from_i32(prefix + ".zp", {1}, &zp));
}

QuantParams load_qp(const Container& c, const std::string& prefix) {
    QuantParams qp;
    qp.scale = c.tensor(prefix + ".scale").as_f32()[0];
    qp.zero_point = c.tensor(prefix + ".zp").as_i32()[0];
    return qp;
}

void push_qconv(Container& c, const std::string& name, const QConv& conv) {
    c.tensors.push_back(TensorBlob::from_i8(
        name + ".w",
        {static_cast<std::uint32_t>(conv.out_ch), static_cast<std::uint32_t>(conv.in_ch),
         static_cast<std::uint32_t>(conv.kernel_len)},
        conv.w.data()));
    c.tensors.push_back(TensorBlob::from_i32(
        name + ".b", {static_cast<std::uint32_t>(conv.out_ch)}, conv.bias.data()));
    c.tensors.push_back(TensorBlob::from_f32(name + ".w_scale", {1}, &conv.w_scale));
    push_qp(c, name + ".in", conv.in_qp);
    push_qp(c, name + ".out", conv.out_qp);
    const std::int32_t rq[2] = {conv.rq.mult, conv.rq.shift};
    c.tensors.push_back(TensorBlob::from_i32(name + ".rq", {2}, rq));
}

QConv load_qconv(const Container& c, const std::string& name, int in_ch, int out_ch,
                 int kernel_len, int dilation) {
    QConv conv;
    conv.in_ch = in_ch;
    conv.out_ch = out_ch;
    conv.kernel_len = kernel_len;
    conv.dilation = dilation;
    const auto& wt = c.tensor(name + ".w");
    if (wt.dims.size() != 3 || wt.dims[0] != static_cast<std::uint32_t>(out_ch) ||
        wt.dims[1] != static_cast<std::uint32_t>(in_ch) ||
        wt.dims[2] != static_cast<std::uint32_t>(kernel_len)) {
        throw DataError("tensor " + name + ".w has unexpected shape");
    }
    conv.w.assign(wt.as_i8(), wt.as_i8() + wt.element_count());
    const auto& bt = c.tensor(name + ".b");
    conv.bias.assign(bt.as_i32(), bt.as_i32() + bt.element_count());
    conv.w_scale = c.tensor(name + ".w_scale").as_f32()[0];
    conv.in_qp = load_qp(c, name + ".in");
    conv.out_qp = load_qp(c, name + ".out");
    const auto* rq = c.tensor(name + ".rq").as_i32();
    conv.rq = Requant{rq[0], rq[1]};
    return conv;
}

}  // namespace

ArchConfig arch_from_meta(const Container& c) {
    ArchConfig cfg;
    cfg.input_len = static_cast<int>(c.meta_long("input_len"));
    cfg.entry_filters = static_cast<int>(c.meta_long("entry_filters"));
    cfg.block_filters = static_cast<int>(c.meta_long("block_filters"));
    cfg.kernel_len = static_cast<int>(c.meta_long("kernel_len"));
    cfg.num_blocks = static_cast<int>(c.meta_long("num_blocks"));
    cfg.n_classes = static_cast<int>(c.meta_long("n_classes"));
    cfg.dropout_p = static_cast<float>(c.meta_double("dropout_p"));
    cfg.bn_eps = static_cast<float>(c.meta_double("bn_eps"));
    cfg.bn_momentum = static_cast<float>(c.meta_double("bn_momentum"));
    return cfg;
}

Container to_container(const Network<float>& net) {
    Container c;
    c.meta["quantized"] = "0";
    put_arch_meta(c, net.cfg);

    push_conv(c, "entry", net.entry);
    for (std::size_t i = 0; i < net.blocks.size(); ++i) {
        const auto& blk = net.blocks[i];
        const std::string p = "block" + std::to_string(i) + ".";
        push_conv(c, p + "conv1", blk.conv1);
        if (blk.bn1) push_bn(c, p + "bn1", *blk.bn1);
        push_conv(c, p + "conv2", blk.conv2);
        if (blk.bn2) push_bn(c, p + "bn2", *blk.bn2);
        if (blk.skip_conv) push_conv(c, p + "skip", *blk.skip_conv);
        if (blk.skip_bn) push_bn(c, p + "skip_bn", *blk.skip_bn);
    }
    const auto& head = net.head;
    std::vector<float> hw(static_cast<std::size_t>(head.w.size()));
    for (Eigen::Index o = 0; o < head.w.rows(); ++o) {
        for (Eigen::Index j = 0; j < head.w.cols(); ++j) {
            hw[static_cast<std::size_t>(o * head.w.cols() + j)] = head.w(o, j);
        }
    }
    c.tensors.push_back(TensorBlob::from_f32(
        "head.w",
        {static_cast<std::uint32_t>(head.w.rows()), static_cast<std::uint32_t>(head.w.cols())},
        hw.data()));
    c.tensors.push_back(TensorBlob::from_f32(
        "head.b", {static_cast<std::uint32_t>(head.b.size())}, head.b.data()));
    return c;
}

Network<float> float_network_from(const Container& c) {
    if (c.quantized()) throw DataError("container holds a quantized model, expected float");
    const ArchConfig cfg = arch_from_meta(c);
    Network<float> net = build_ecg_tcn<float>(cfg, 0);

    load_conv(c, "entry", net.entry);
    for (std::size_t i = 0; i < net.blocks.size(); ++i) {
        auto& blk = net.blocks[i];
        const std::string p = "block" + std::to_string(i) + ".";
        load_conv(c, p + "conv1", blk.conv1);
        load_bn(c, p + "bn1", *blk.bn1);
        load_conv(c, p + "conv2", blk.conv2);
        load_bn(c, p + "bn2", *blk.bn2);
        if (blk.skip_conv) {
            load_conv(c, p + "skip", *blk.skip_conv);
            load_bn(c, p + "skip_bn", *blk.skip_bn);
        }
    }
    const auto& wt = c.tensor("head.w");
    for (Eigen::Index o = 0; o < net.head.w.rows(); ++o) {
        for (Eigen::Index j = 0; j < net.head.w.cols(); ++j) {
            net.head.w(o, j) = wt.as_f32()[static_cast<std::size_t>(o * net.head.w.cols() + j)];
        }
    }
    std::memcpy(net.head.b.data(), c.tensor("head.b").as_f32(),
                static_cast<std::size_t>(net.head.b.size()) * 4);
    return net;
}

Container to_container(const QNetwork& net) {
    Container c;
    c.meta["quantized"] = "1";
    put_arch_meta(c, net.cfg);

    push_qp(c, "input", net.input_qp);
    push_qconv(c, "entry", net.entry);
    for (std::size_t i = 0; i < net.blocks.size(); ++i) {
        const auto& blk = net.blocks[i];
        const std::string p = "block" + std::to_string(i) + ".";
        push_qconv(c, p + "conv1", blk.conv1);
        push_qconv(c, p + "conv2", blk.conv2);
        if (blk.skip) push_qconv(c, p + "skip", *blk.skip);
        const std::int32_t add_rq[4] = {blk.add_main.mult, blk.add_main.shift,
                                        blk.add_skip.mult, blk.add_skip.shift};
        c.tensors.push_back(TensorBlob::from_i32(p + "add_rq", {4}, add_rq));
        push_qp(c, p + "out", blk.out_qp);
    }

    c.tensors.push_back(TensorBlob::from_i8(
        "head.w",
        {static_cast<std::uint32_t>(net.head.out_n), static_cast<std::uint32_t>(net.head.in_n)},
        net.head.w.data()));
    c.tensors.push_back(TensorBlob::from_i32(
        "head.b", {static_cast<std::uint32_t>(net.head.out_n)}, net.head.bias.data()));
    c.tensors.push_back(TensorBlob::from_f32("head.w_scale", {1}, &net.head.w_scale));
    push_qp(c, "head.in", net.head.in_qp);
    push_qp(c, "head.logits", net.head.logits_qp);
    return c;
}

QNetwork qnetwork_from(const Container& c) {
    if (!c.quantized()) throw DataError("container holds a float model, expected quantized");
    QNetwork net;
    net.cfg = arch_from_meta(c);
    net.input_qp = load_qp(c, "input");
    net.entry = load_qconv(c, "entry", 1, net.cfg.entry_filters, 1, 1);

    int in_ch = net.cfg.entry_filters;
    for (int i = 0; i < net.cfg.num_blocks; ++i) {
        const std::string p = "block" + std::to_string(i) + ".";
        QBlock blk;
        blk.conv1 = load_qconv(c, p + "conv1", in_ch, net.cfg.block_filters, net.cfg.kernel_len,
                               net.cfg.dilation(i));
        blk.conv2 = load_qconv(c, p + "conv2", net.cfg.block_filters, net.cfg.block_filters,
                               net.cfg.kernel_len, net.cfg.dilation(i));
        if (c.find(p + "skip.w")) {
            blk.skip = load_qconv(c, p + "skip", in_ch, net.cfg.block_filters, 1, 1);
        }
        const auto* add_rq = c.tensor(p + "add_rq").as_i32();
        blk.add_main = Requant{add_rq[0], add_rq[1]};
        blk.add_skip = Requant{add_rq[2], add_rq[3]};
        blk.out_qp = load_qp(c, p + "out");
        net.blocks.push_back(std::move(blk));
        in_ch = net.cfg.block_filters;
    }

    const auto& wt = c.tensor("head.w");
    net.head.out_n = static_cast<int>(wt.dims.at(0));
    net.head.in_n = static_cast<int>(wt.dims.at(1));
    net.head.w.assign(wt.as_i8(), wt.as_i8() + wt.element_count());
    const auto& bt = c.tensor("head.b");
    net.head.bias.assign(bt.as_i32(), bt.as_i32() + bt.element_count());
    net.head.w_scale = c.tensor("head.w_scale").as_f32()[0];
    net.head.in_qp = load_qp(c, "head.in");
    net.head.logits_qp = load_qp(c, "head.logits");

    check_accumulator_bounds(net);
    return net;
}

void save_model(const std::string& path, const Network<float>& net) {
    write_container(path, to_container(net));
}

void save_model(const std::string& path, const QNetwork& net) {
    write_container(path, to_container(net));
}

}  // namespace ecgtcn
