// bladenet: gen / train / eval / report / inspect.
// Exit codes: 0 success, 1 runtime failure, 2 usage error.

#include "bladenet/pipeline.hpp"

#include "CLI11.hpp"

#include <iostream>
#include <optional>
#include <string>
#include <vector>

using namespace bladenet;

namespace {

struct UsageError : Error {
    using Error::Error;
};

Station parse_station(const std::string& s) {
    const auto us = s.find('_');
    if (us == std::string::npos) throw UsageError("station must look like suction_0.40, got '" + s + "'");
    try {
        return {side_from_string(s.substr(0, us)), std::stod(s.substr(us + 1))};
    } catch (const std::exception&) {
        throw UsageError("station must look like suction_0.40, got '" + s + "'");
    }
}

fs::path require_file(const std::string& p, const char* what) {
    if (!fs::exists(p)) throw UsageError(std::string(what) + " not found: " + p);
    return p;
}

std::vector<fs::path> existing_banks(const ExperimentConfig& c, const fs::path& out) {
    std::vector<fs::path> dirs;
    for (const auto& a : c.archs)
        if (fs::exists(bank_dir(out, a) / "bank.json")) dirs.push_back(bank_dir(out, a));
    return dirs;
}

void print_csv_table(const std::string& csv) { std::cout << csv; }

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Blade library generation, cascade Cp labels and station classifiers"};
    app.require_subcommand(1);
    app.fallthrough();

    std::string config_path, out_dir;
    std::optional<unsigned> jobs;
    app.add_option("--config", config_path, "experiment config (JSON); flags override its fields");
    app.add_option("--out", out_dir, "output directory");
    app.add_option("--jobs", jobs, "worker threads")->check(CLI::PositiveNumber);

    auto* gen = app.add_subcommand("gen", "generate the blade library, solve Cp and write the dataset");
    std::optional<std::size_t> count;
    std::optional<std::uint64_t> gen_seed;
    bool dry_run = false;
    gen->add_option("--count", count, "number of blades to request")->check(CLI::PositiveNumber);
    gen->add_option("--seed", gen_seed, "library seed");
    gen->add_flag("--dry-run", dry_run, "report the requested library size without generating");

    auto* train = app.add_subcommand("train", "train one classifier bank per architecture");
    std::string dataset_path;
    std::vector<std::string> arch_names;
    std::optional<std::size_t> depth, epochs;
    std::optional<std::uint64_t> train_seed;
    train->add_option("--dataset", dataset_path, "dataset file (default <out>/dataset.bldn)");
    train->add_option("--arch", arch_names, "nn2, cnn2_nn2 or cnn4_nn2 (repeatable)");
    train->add_option("--depth", depth, "convolution depth d");
    train->add_option("--epochs", epochs, "maximum epochs")->check(CLI::PositiveNumber);
    train->add_option("--seed", train_seed, "training seed");

    auto* eval = app.add_subcommand("eval", "label-adjacency accuracy: table2.csv and figure9.csv");
    std::vector<std::string> bank_paths;
    std::string split_name = "test";
    eval->add_option("--dataset", dataset_path, "dataset file (default <out>/dataset.bldn)");
    eval->add_option("--bank", bank_paths, "bank directory (repeatable; default all configured banks under <out>/banks)");
    eval->add_option("--split", split_name, "train, validation or test");

    auto* report = app.add_subcommand("report", "per-station prediction for one blade: example_<id>.csv");
    std::optional<std::uint32_t> blade;
    report->add_option("--blade", blade, "blade id")->required();
    report->add_option("--dataset", dataset_path, "dataset file (default <out>/dataset.bldn)");
    report->add_option("--bank", bank_paths, "bank directory (default the last configured architecture)");
    report->add_option("--split", split_name, "split the blade must belong to");

    auto* inspect = app.add_subcommand("inspect", "feature maps of one convolution layer as PGM images");
    std::string station_name = "suction_0.40", layer_name = "last";
    std::optional<double> fraction;
    inspect->add_option("--blade", blade, "blade id (default 0)");
    inspect->add_option("--dataset", dataset_path, "dataset file (default <out>/dataset.bldn)");
    inspect->add_option("--bank", bank_paths, "bank directory (default the first configured convolutional architecture)");
    inspect->add_option("--station", station_name, "station, e.g. suction_0.40");
    inspect->add_option("--layer", layer_name, "'last' or the 1-based convolution index");
    inspect->add_option("--fraction", fraction, "activated-cell threshold as a fraction of the layer maximum");

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::CallForAllHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return 2;
    }

    try {
        ExperimentConfig cfg = config_path.empty() ? ExperimentConfig{} : load_config(config_path);
        if (!out_dir.empty()) cfg.out = out_dir;
        if (jobs) cfg.jobs = *jobs;
        const fs::path out = cfg.out;
        auto dataset_file = [&] { return require_file(dataset_path.empty() ? (out / "dataset.bldn").string() : dataset_path, "dataset"); };
        auto split = [&] {
            try {
                return split_from_string(split_name);
            } catch (const InputError& e) {
                throw UsageError(e.what());
            }
        };

        if (*gen) {
            if (count) cfg.sweep.count = *count;
            if (gen_seed) cfg.library_seed = *gen_seed;
            cfg.validate();
            const auto sweep = effective_sweep(cfg);
            if (dry_run) {
                std::cout << "requested " << sweep.requested() << " blades from a grid of " << sweep.grid_size() << " ("
                          << sweep.pressure.size() << " pressure x " << sweep.suction.size() << " suction)\n";
                return 0;
            }
            auto g = generate_dataset(cfg, &std::cerr);
            write_gen_outputs(out, g, cfg);
            std::cout << "wrote " << (out / "dataset.bldn").string() << ": " << g.dataset.records.size() << " blades, "
                      << g.skipped.size() << " skipped, " << g.failures.size() << " solver failures, " << g.dataset.stations.size()
                      << " stations\n";
            return 0;
        }

        if (*train) {
            if (!arch_names.empty()) {
                cfg.archs.clear();
                for (const auto& n : arch_names) {
                    ArchSpec a;
                    try {
                        a.kind = arch_from_string(n);
                    } catch (const InputError& e) {
                        throw UsageError(e.what());
                    }
                    cfg.archs.push_back(a);
                }
            }
            if (depth)
                for (auto& a : cfg.archs) a.conv_depth = *depth;
            if (epochs) cfg.train.max_epochs = *epochs;
            if (train_seed) cfg.train_seed = *train_seed;
            cfg.validate();
            const auto path = dataset_file();
            const auto data = load_dataset(path.string());
            const auto hash = file_fingerprint(path);
            write_config(out, cfg);
            for (const auto& a : cfg.archs) {
                std::cerr << "training " << a.label() << "\n";
                train_and_save(a, data, hash, cfg, bank_dir(out, a), &std::cerr);
                std::cout << "wrote " << bank_dir(out, a).string() << "\n";
            }
            return 0;
        }

        if (*eval) {
            const auto which = split();
            std::vector<fs::path> dirs(bank_paths.begin(), bank_paths.end());
            if (dirs.empty()) dirs = existing_banks(cfg, out);
            if (dirs.empty()) throw UsageError("no trained banks found under " + (out / "banks").string() + "; run train or pass --bank");
            for (const auto& d : dirs) require_file((d / "bank.json").string(), "bank manifest");
            const auto data = load_dataset(dataset_file().string());
            write_config(out, cfg);
            auto eo = evaluate_and_report(dirs, data, which, out);
            std::ostringstream t2;
            write_table2_csv(t2, eo.rows);
            print_csv_table(t2.str());
            return 0;
        }

        if (*report) {
            const auto which = split();
            fs::path dir = bank_paths.empty() ? bank_dir(out, cfg.archs.back()) : fs::path(bank_paths.front());
            require_file((dir / "bank.json").string(), "bank manifest");
            const auto data = load_dataset(dataset_file().string());
            auto bank = load_bank(dir);
            const auto rows = example_report(bank, data, *blade, which);
            std::ostringstream csv;
            write_example_csv(csv, rows);
            write_text(out / ("example_" + std::to_string(*blade) + ".csv"), csv.str());
            write_config(out, cfg);
            print_csv_table(csv.str());
            return 0;
        }

        if (*inspect) {
            fs::path dir;
            if (!bank_paths.empty()) {
                dir = bank_paths.front();
            } else {
                for (const auto& a : cfg.archs)
                    if (a.kind != ArchKind::nn2) {
                        dir = bank_dir(out, a);
                        break;
                    }
                if (dir.empty()) throw UsageError("no convolutional architecture configured; pass --bank");
            }
            require_file((dir / "bank.json").string(), "bank manifest");
            std::size_t ordinal = 0;
            if (layer_name != "last") {
                try {
                    ordinal = std::stoul(layer_name);
                } catch (const std::exception&) {
                    throw UsageError("--layer must be 'last' or a positive integer");
                }
                if (ordinal == 0) throw UsageError("--layer indices start at 1");
            }
            const Station st = parse_station(station_name);
            const double frac = fraction.value_or(cfg.activation_fraction);
            const auto data = load_dataset(dataset_file().string());
            auto bank = load_bank(dir);
            auto& m = bank.model(st);
            const std::uint32_t id = blade.value_or(0);
            const auto& x = data.records[data.find_record(id)].matrix;
            const auto fm = inspect_activations(m.net, x, ordinal);
            const std::size_t conv_index = ordinal ? ordinal : conv_layers(m.net).size();

            const std::size_t d = fm.maps.dim(0), H = fm.maps.dim(1), W = fm.maps.dim(2);
            const fs::path img = out / "inspect" / bank.arch.label() / st.name() / ("blade" + std::to_string(id) + "_conv" + std::to_string(conv_index));
            fs::create_directories(img);
            const double mx = std::max(0.0, *std::max_element(fm.maps.values().begin(), fm.maps.values().end()));
            for (std::size_t k = 0; k < d; ++k) {
                std::ofstream os(img / ("map_" + std::to_string(k) + ".pgm"), std::ios::binary);
                write_pgm(os, fm.maps.values().subspan(k * H * W, H * W), H, W, 0.0, mx > 0.0 ? mx : 1.0);
            }
            {
                std::ofstream os(img / "input.pgm", std::ios::binary);
                write_pgm(os, x);
            }
            {
                std::ofstream os(img / "maps.csv");
                os << "map,row,col,value\n";
                char buf[96];
                for (std::size_t k = 0; k < d; ++k)
                    for (std::size_t r = 0; r < H; ++r)
                        for (std::size_t c = 0; c < W; ++c) {
                            std::snprintf(buf, sizeof buf, "%zu,%zu,%zu,%.17g\n", k, r, c, fm.maps[(k * H + r) * W + c]);
                            os << buf;
                        }
            }
            const std::size_t kk = fm.kernels.dim(2) * fm.kernels.dim(3), per = fm.kernels.dim(1) * kk;
            for (std::size_t k = 0; k < d; ++k) {
                const auto kv = fm.kernels.values().subspan(k * per, kk);
                const auto [lo, hi] = std::minmax_element(kv.begin(), kv.end());
                std::ofstream os(img / ("kernel_" + std::to_string(k) + ".pgm"), std::ios::binary);
                write_pgm(os, kv, fm.kernels.dim(2), fm.kernels.dim(3), *lo, *hi);
            }
            const auto n = count_activated(fm.maps.values(), frac);
            write_config(out, cfg);
            std::cout << "wrote " << d << " feature maps (" << H << "x" << W << ") to " << img.string() << "\n";
            std::cout << "activated cells: " << n << " (threshold " << frac << " x max " << mx << ")\n";
            return 0;
        }
    } catch (const UsageError& e) {
        std::cerr << "usage error: " << e.what() << "\n";
        return 2;
    } catch (const InputError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 0;
}
