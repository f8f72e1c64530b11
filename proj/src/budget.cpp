#include "iib/budget.hpp"

#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <numeric>
#include <sstream>

#include "iib/errors.hpp"
#include "iib/io_util.hpp"
#include "iib/ops.hpp"

namespace iib {

BudgetPrior BudgetPrior::uniform(std::size_t M) {
    if (M == 0) throw InvalidInput("BudgetPrior::uniform: M must be positive");
    BudgetPrior prior;
    prior.raw.assign(M, 0.5);
    prior.beta.assign(M, 1.0 / static_cast<double>(M));
    prior.anchor = 0;
    return prior;
}

BudgetPrior normalize_budget(const Vec& B, double tau) {
    if (B.empty()) throw InvalidInput("normalize_budget: empty budget vector");
    for (double b : B)
        if (!(b >= 0.0 && b <= 1.0)) throw InvalidInput("normalize_budget: budgets must lie in [0, 1]");

    BudgetPrior prior;
    prior.raw = B;
    prior.tau = tau;
    prior.beta = softmax_temp(B, tau);  // rejects tau <= 0
    prior.anchor = 0;
    for (std::size_t m = 1; m < prior.beta.size(); ++m)
        if (prior.beta[m] > prior.beta[prior.anchor]) prior.anchor = m;
    return prior;
}

namespace {

double modality_accuracy(const DenseNet& encoder, const DenseNet& classifier, const Dataset& ds,
                         std::size_t m) {
    std::size_t correct = 0;
    for (const Sample& s : ds.samples) {
        const Vec logits = forward(classifier, forward(encoder, s.inputs[m]));
        std::size_t best = 0;
        for (std::size_t c = 1; c < logits.size(); ++c)
            if (logits[c] > logits[best]) best = c;
        correct += static_cast<int>(best) == s.label;
    }
    return static_cast<double>(correct) / static_cast<double>(ds.size());
}

}  // namespace

UnimodalModel pretrain_unimodal(const Dataset& train, const Dataset& test, std::size_t m,
                                const PretrainConfig& config) {
    if (m >= train.M()) throw InvalidInput("pretrain_unimodal: modality index out of range");
    if (train.size() == 0) throw InvalidInput("pretrain_unimodal: empty training set");
    if (config.epochs == 0 || config.batch_size == 0)
        throw InvalidInput("pretrain_unimodal: epochs and batch_size must be positive");

    const Rng root = Rng(config.seed).substream("pretrain/mod" + std::to_string(m));
    UnimodalModel model;
    model.modality = m;
    const std::size_t in_dim = train.specs[m].dim;
    const std::size_t dims_enc[] = {in_dim, config.hidden_width, config.feature_dim};
    const std::size_t dims_cls[] = {config.feature_dim, train.C};
    model.encoder = make_mlp(dims_enc, root.substream("enc"));
    model.classifier = make_mlp(dims_cls, root.substream("cls"));

    AdamState opt_enc = AdamState::zeros_like(model.encoder, config.adam);
    AdamState opt_cls = AdamState::zeros_like(model.classifier, config.adam);
    NetGrads g_enc = NetGrads::zeros_like(model.encoder);
    NetGrads g_cls = NetGrads::zeros_like(model.classifier);

    std::vector<std::size_t> order(train.size());
    std::iota(order.begin(), order.end(), std::size_t{0});

    for (std::size_t epoch = 0; epoch < config.epochs; ++epoch) {
        root.substream("shuffle/epoch" + std::to_string(epoch)).shuffle(order);

        double loss_sum = 0.0;
        for (std::size_t start = 0; start < order.size(); start += config.batch_size) {
            const std::size_t end = std::min(order.size(), start + config.batch_size);
            const double inv_n = 1.0 / static_cast<double>(end - start);
            g_enc.clear();
            g_cls.clear();

            for (std::size_t k = start; k < end; ++k) {
                const Sample& s = train.samples[order[k]];
                ForwardTape t_enc, t_cls;
                forward(model.encoder, s.inputs[m], t_enc);
                forward(model.classifier, t_enc.output(), t_cls);
                const Vec& logits = t_cls.output();
                loss_sum += cross_entropy_from_logits(logits, s.label);

                Vec dlogits = softmax(logits);
                dlogits[static_cast<std::size_t>(s.label)] -= 1.0;
                for (double& g : dlogits) g *= inv_n;
                const Vec dz = backward(model.classifier, t_cls, dlogits, g_cls);
                backward(model.encoder, t_enc, dz, g_enc);
            }
            adam_step(model.encoder, g_enc, opt_enc, "encoder");
            adam_step(model.classifier, g_cls, opt_cls, "classifier");
        }

        const double mean_loss = loss_sum / static_cast<double>(train.size());
        if (!std::isfinite(mean_loss))
            throw TrainingAbort("pretrain_unimodal: non-finite loss at epoch " + std::to_string(epoch) +
                                " (modality " + std::to_string(m) + ")");
        model.log.push_back({epoch, mean_loss, modality_accuracy(model.encoder, model.classifier, train, m),
                             modality_accuracy(model.encoder, model.classifier, test, m)});
    }
    return model;
}

double unimodal_accuracy(const UnimodalModel& model, const Dataset& ds) {
    if (ds.size() == 0) throw InvalidInput("unimodal_accuracy: empty dataset");
    if (model.modality >= ds.M()) throw InvalidInput("unimodal_accuracy: modality index out of range");
    return modality_accuracy(model.encoder, model.classifier, ds, model.modality);
}

Vec estimate_budget(const std::vector<UnimodalModel>& models, const Dataset& ds) {
    if (ds.size() == 0) throw InvalidInput("estimate_budget: empty dataset");
    if (models.size() != ds.M())
        throw InvalidInput("estimate_budget: need exactly one model per modality");

    Vec B(models.size(), 0.0);
    for (std::size_t m = 0; m < models.size(); ++m) {
        if (models[m].modality != m) throw InvalidInput("estimate_budget: models out of modality order");
        double acc = 0.0;
        for (const Sample& s : ds.samples) {
            const Vec p = softmax(forward(models[m].classifier, forward(models[m].encoder, s.inputs[m])));
            acc += 1.0 - entropy_normalized(p);
        }
        B[m] = acc / static_cast<double>(ds.size());
    }
    return B;
}

void save_budget_csv(const BudgetPrior& prior, const std::string& path) {
    std::ostringstream out;
    out << "#tau=" << format_double(prior.tau) << '\n';
    out << "modality,B,beta,anchor\n";
    for (std::size_t m = 0; m < prior.M(); ++m)
        out << m << ',' << format_double(prior.raw[m]) << ',' << format_double(prior.beta[m]) << ','
            << (m == prior.anchor ? 1 : 0) << '\n';
    write_text_file(path, out.str());
}

BudgetPrior load_budget_csv(const std::string& path) {
    std::istringstream in(read_text_file(path));
    std::string line;
    double tau = 0.0;
    bool have_tau = false;
    Vec raw;
    while (std::getline(in, line)) {
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty()) continue;
        if (line[0] == '#') {
            if (line.rfind("#tau=", 0) == 0) {
                tau = parse_double(line.substr(5));
                have_tau = true;
            }
            continue;
        }
        if (line.rfind("modality,", 0) == 0) continue;  // header
        const auto fields = split_csv_line(line);
        if (fields.size() != 4) throw IoError(path + ": malformed budget row '" + line + "'");
        if (static_cast<std::size_t>(parse_int(fields[0])) != raw.size())
            throw IoError(path + ": modality rows out of order");
        raw.push_back(parse_double(fields[1]));
    }
    if (!have_tau) throw IoError(path + ": missing #tau metadata line");
    return normalize_budget(raw, tau);
}

namespace {

constexpr char kUniMagic[8] = {'I', 'I', 'B', 'U', 'N', 'I', '0', '1'};

template <typename T>
void write_pod(std::ostream& os, const T& v) {
    os.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <typename T>
T read_pod(std::istream& is) {
    T v{};
    is.read(reinterpret_cast<char*>(&v), sizeof(T));
    return v;
}

}  // namespace

void save_unimodal_file(const std::string& path, const UnimodalModel& model) {
    std::ofstream os(path, std::ios::binary);
    if (!os) throw IoError("cannot open for writing: " + path);
    os.write(kUniMagic, sizeof(kUniMagic));
    write_pod(os, static_cast<std::uint64_t>(model.modality));
    save_net(os, model.encoder);
    save_net(os, model.classifier);
    write_pod(os, static_cast<std::uint64_t>(model.log.size()));
    for (const PretrainEpochLog& row : model.log) {
        write_pod(os, static_cast<std::uint64_t>(row.epoch));
        write_pod(os, row.train_loss);
        write_pod(os, row.train_acc);
        write_pod(os, row.test_acc);
    }
    if (!os) throw IoError(path + ": write failed");
}

UnimodalModel load_unimodal_file(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw IoError("cannot open: " + path);
    char magic[8];
    is.read(magic, sizeof(magic));
    if (!is || std::memcmp(magic, kUniMagic, sizeof(magic)) != 0)
        throw IoError(path + ": bad unimodal checkpoint magic");
    UnimodalModel model;
    model.modality = static_cast<std::size_t>(read_pod<std::uint64_t>(is));
    model.encoder = load_net(is);
    model.classifier = load_net(is);
    const auto rows = read_pod<std::uint64_t>(is);
    model.log.resize(rows);
    for (PretrainEpochLog& row : model.log) {
        row.epoch = static_cast<std::size_t>(read_pod<std::uint64_t>(is));
        row.train_loss = read_pod<double>(is);
        row.train_acc = read_pod<double>(is);
        row.test_acc = read_pod<double>(is);
    }
    if (!is) throw IoError(path + ": truncated unimodal checkpoint");
    return model;
}

}  // namespace iib
