#include <doctest.h>

#include <cmath>
#include <cstdio>
#include <fstream>
#include <string>
#include <unistd.h>

#include "spindrop/checkpoint.hpp"
#include "spindrop/data.hpp"
#include "spindrop/trainer.hpp"

using namespace spindrop;

namespace {

// Perceptron oracle: returns true when the labeled set is linearly separable
// (convergence within the iteration budget certifies it).
bool perceptron_separable(const LabeledData& d, int max_epochs = 200) {
    double w0 = 0.0, w1 = 0.0, b = 0.0;
    for (int epoch = 0; epoch < max_epochs; ++epoch) {
        int mistakes = 0;
        for (int i = 0; i < d.size(); ++i) {
            const double x0 = d.images.at(i, 0, 0, 0), x1 = d.images.at(i, 1, 0, 0);
            const double y = d.labels[static_cast<std::size_t>(i)] == 1 ? 1.0 : -1.0;
            if (y * (w0 * x0 + w1 * x1 + b) <= 0.0) {
                w0 += y * x0;
                w1 += y * x1;
                b += y;
                ++mistakes;
            }
        }
        if (mistakes == 0) return true;
    }
    return false;
}

TrainConfig tiny_config(int epochs, std::uint64_t seed) {
    TrainConfig cfg;
    cfg.epochs = epochs;
    cfg.batch_size = 16;
    cfg.learning_rate = 0.05;
    cfg.momentum = 0.9;
    cfg.seed = seed;
    cfg.seed_set = true;
    return cfg;
}

}  // namespace

TEST_CASE("plain gradient descent trajectory matches the closed form") {
    // quadratic loss 0.5*w^2, grad = w, momentum 0: w_k = w_0 * (1 - lr)^k
    double w = 1.0, vel = 0.0;
    const double lr = 0.1;
    for (int k = 1; k <= 5; ++k) {
        w = sgd_update(w, w, vel, lr, 0.0);
        CHECK(std::fabs(w - std::pow(1.0 - lr, k)) <= 1e-9);
    }
}

TEST_CASE("momentum update matches the hand-iterated recurrence") {
    double w = 2.0, vel = 0.0;
    double ref_w = 2.0, ref_v = 0.0;
    const double lr = 0.05, mu = 0.9;
    for (int k = 0; k < 10; ++k) {
        const double grad = ref_w;  // quadratic loss again
        ref_v = mu * ref_v + grad;
        ref_w = ref_w - lr * ref_v;
        w = sgd_update(w, w, vel, lr, mu);
        CHECK(w == doctest::Approx(ref_w).epsilon(1e-15));
    }
}

TEST_CASE("sgd_step with lr=0 leaves the net unchanged and returns cross-entropy") {
    HyperParams hp;
    hp.rho = 0.0;
    hp.lambda = 0.0;
    BinaryConvNet net = make_blob_net(hp, StreamRng(2), false);
    const LabeledData d = gen_blobs(32, StreamRng(3));
    Optimizer opt(net, 0.0);
    const Tensor4 before = std::get<LinearLayer>(net.layers[0]).w.proxy;
    const double loss = sgd_step(net, d.images, d.labels, opt, 0.0, 0.0, StreamRng(4), 0);
    CHECK(std::get<LinearLayer>(net.layers[0]).w.proxy.v == before.v);
    const EvalResult ev = evaluate(net, d.images, d.labels);
    CHECK(loss == doctest::Approx(ev.loss).epsilon(1e-9));
}

TEST_CASE("training the blob task reaches 100% train accuracy") {
    const LabeledData blobs = gen_blobs(240, StreamRng(42));
    REQUIRE(perceptron_separable(blobs));  // oracle: the data is separable

    HyperParams hp;
    hp.rho = 0.0;
    hp.lambda = 1e-6;
    BinaryConvNet net = make_blob_net(hp, StreamRng(1), false);
    DatasetSplit split = split_dataset(blobs, 200, StreamRng(5));
    const TrainResult r = train(net, split, tiny_config(20, 7));
    CHECK(r.log.size() == 20);
    CHECK(evaluate_dataset(r.net, split.train).accuracy == 1.0);
}

TEST_CASE("objective decreases over training on the blob task") {
    const LabeledData blobs = gen_blobs(240, StreamRng(42));
    HyperParams hp;
    hp.rho = 0.15;
    hp.lambda = 1e-6;
    BinaryConvNet net = make_blob_net(hp, StreamRng(1), true);
    DatasetSplit split = split_dataset(blobs, 200, StreamRng(5));
    const TrainResult r = train(net, split, tiny_config(8, 7));
    CHECK(r.log.back().objective < r.log.front().objective);
}

TEST_CASE("identical seeds give bit-identical loss curves and weights") {
    const LabeledData blobs = gen_blobs(120, StreamRng(11));
    DatasetSplit split = split_dataset(blobs, 100, StreamRng(12));
    HyperParams hp;
    hp.rho = 0.15;
    hp.lambda = 1e-6;
    auto run = [&] {
        BinaryConvNet net = make_blob_net(hp, StreamRng(13), true);
        return train(net, split, tiny_config(6, 99));
    };
    const TrainResult a = run(), b = run();
    REQUIRE(a.log.size() == b.log.size());
    for (std::size_t i = 0; i < a.log.size(); ++i) {
        CHECK(a.log[i].objective == b.log[i].objective);
        CHECK(a.log[i].train_acc == b.log[i].train_acc);
        CHECK(a.log[i].val_acc == b.log[i].val_acc);
    }
    CHECK(std::get<LinearLayer>(a.net.layers[0]).w.proxy.v ==
          std::get<LinearLayer>(b.net.layers[0]).w.proxy.v);
}

TEST_CASE("zero epochs leave the net unchanged with an empty log") {
    HyperParams hp;
    BinaryConvNet net = make_blob_net(hp, StreamRng(21), false);
    const Tensor4 before = std::get<LinearLayer>(net.layers[0]).w.proxy;
    const LabeledData blobs = gen_blobs(50, StreamRng(22));
    DatasetSplit split = split_dataset(blobs, 40, StreamRng(23));
    const TrainResult r = train(net, split, tiny_config(0, 1));
    CHECK(r.log.empty());
    CHECK(std::get<LinearLayer>(r.net.layers[0]).w.proxy.v == before.v);
}

TEST_CASE("training config validation") {
    TrainConfig cfg = tiny_config(1, 0);
    cfg.seed_set = false;
    CHECK_THROWS_AS(cfg.validate(), ParamError);
    cfg.seed_set = true;
    cfg.batch_size = 0;
    CHECK_THROWS_AS(cfg.validate(), ParamError);
}

TEST_CASE("checkpoint round trip preserves forward outputs bit-exactly") {
    HyperParams hp;
    hp.rho = 0.15;
    BinaryConvNet net =
        make_lenet(1, 12, 12, 4, 4, 6, 16, hp, PlacementMode::kTopologyWise, StreamRng(31));
    const std::string path = "/tmp/spindrop_ckpt_" + std::to_string(getpid());
    save_checkpoint(path, net);
    const BinaryConvNet back = load_checkpoint(path);

    StreamRng rng(32);
    Tensor4 x(3, 1, 12, 12);
    for (double& v : x.v) v = rng.next_unit();
    const Tensor4 a = net.forward(x, nullptr, false);
    const Tensor4 b = back.forward(x, nullptr, false);
    CHECK(a.v == b.v);
    CHECK(back.placement.targets == net.placement.targets);
    CHECK(back.hp.rho == net.hp.rho);

    // saved twice -> identical bytes
    const std::string path2 = path + "_2";
    save_checkpoint(path2, net);
    std::ifstream f1(path, std::ios::binary), f2(path2, std::ios::binary);
    const std::string c1((std::istreambuf_iterator<char>(f1)), std::istreambuf_iterator<char>());
    const std::string c2((std::istreambuf_iterator<char>(f2)), std::istreambuf_iterator<char>());
    CHECK(c1 == c2);
    std::remove(path.c_str());
    std::remove((path + ".json").c_str());
    std::remove(path2.c_str());
    std::remove((path2 + ".json").c_str());
}

TEST_CASE("corrupted checkpoints are rejected with format errors") {
    const std::string path = "/tmp/spindrop_ckpt_bad_" + std::to_string(getpid());
    {
        std::ofstream f(path, std::ios::binary);
        f << "NOTACKPT";
    }
    CHECK_THROWS_AS(load_checkpoint(path), DataFormatError);
    std::remove(path.c_str());
}

TEST_CASE("metrics CSV format") {
    const std::string path = "/tmp/spindrop_metrics_" + std::to_string(getpid());
    write_metrics_csv(path, {{0, 1.5, 0.25, 0.5}, {1, 0.75, 0.9, 0.85}});
    std::ifstream f(path);
    std::string line;
    std::getline(f, line);
    CHECK(line == "epoch,objective,train_acc,val_acc");
    std::getline(f, line);
    CHECK(line == "0,1.5,0.25,0.5");
    std::remove(path.c_str());
}
