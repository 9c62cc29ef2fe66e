#include "feddah/metrics.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <map>
#include <set>

namespace feddah {

std::string format_double(double v) {
    char buf[32];
    auto res = std::to_chars(buf, buf + sizeof(buf), v);
    return std::string(buf, res.ptr);
}

std::vector<MetricsRecord> to_records(const std::string& run_id, const std::string& mode,
                                      const std::vector<RoundLog>& logs) {
    std::vector<MetricsRecord> records;
    for (const RoundLog& log : logs) {
        for (const RoundLog::ClientEntry& entry : log.clients) {
            MetricsRecord rec;
            rec.run_id = run_id;
            rec.mode = mode;
            rec.round = log.global_round;
            rec.client = entry.client_id;
            rec.task = entry.task_id;
            rec.dice = entry.dice;
            rec.mean_dice = entry.mean_dice;
            rec.server_loss = entry.server_loss;
            rec.w_s = entry.w_s;
            records.push_back(std::move(rec));
        }
    }
    return records;
}

namespace {

std::string cell(double v) { return std::isnan(v) ? std::string() : format_double(v); }

}  // namespace

void write_metrics(const std::vector<MetricsRecord>& records, const std::string& dir,
                   int num_tasks) {
    std::filesystem::create_directories(dir);
    std::ofstream out(std::filesystem::path(dir) / "metrics.csv", std::ios::binary);
    if (!out) throw Error("cannot write metrics.csv in " + dir);
    out << "run_id,mode,round,client,task";
    for (int t = 1; t <= num_tasks; ++t) out << ",dice_" << t;
    out << ",mean_dice,server_loss,w_s\n";
    for (const MetricsRecord& rec : records) {
        out << rec.run_id << "," << rec.mode << "," << rec.round << "," << rec.client << ","
            << rec.task;
        for (int t = 0; t < num_tasks; ++t) {
            out << ",";
            if (t < static_cast<int>(rec.dice.size())) out << format_double(rec.dice[t]);
        }
        out << "," << format_double(rec.mean_dice) << "," << cell(rec.server_loss) << ","
            << cell(rec.w_s) << "\n";
    }
}

nlohmann::json build_summary(const ExperimentConfig& cfg,
                             const std::vector<MetricsRecord>& records) {
    int last_round = 0;
    std::set<int> client_ids;
    for (const MetricsRecord& rec : records) {
        last_round = std::max(last_round, rec.round);
        client_ids.insert(rec.client);
    }
    nlohmann::json final_mean = nlohmann::json::object();
    nlohmann::json final_per_task = nlohmann::json::object();
    nlohmann::json retention = nlohmann::json::object();
    for (int client : client_ids) {
        std::vector<double> peak;
        std::vector<double> final_dice;
        double final_mean_dice = 0.0;
        for (const MetricsRecord& rec : records) {
            if (rec.client != client) continue;
            if (peak.empty()) peak.assign(rec.dice.size(), 0.0);
            for (size_t t = 0; t < rec.dice.size(); ++t) {
                peak[t] = std::max(peak[t], rec.dice[t]);
            }
            if (rec.round == last_round) {
                final_dice = rec.dice;
                final_mean_dice = rec.mean_dice;
            }
        }
        std::vector<double> ratios(final_dice.size(), 1.0);
        for (size_t t = 0; t < final_dice.size(); ++t) {
            ratios[t] = peak[t] > 0.0 ? final_dice[t] / peak[t] : 1.0;
        }
        std::string key = std::to_string(client);
        final_mean[key] = final_mean_dice;
        final_per_task[key] = final_dice;
        retention[key] = ratios;
    }
    nlohmann::json doc;
    doc["config"] = config_to_json(cfg);
    doc["seed"] = cfg.fed.seed;
    doc["per_client_final_mean_dice"] = std::move(final_mean);
    doc["per_client_per_task_final_dice"] = std::move(final_per_task);
    doc["peak_vs_final_retention"] = std::move(retention);
    return doc;
}

void write_summary(const ExperimentConfig& cfg, const std::vector<MetricsRecord>& records,
                   const std::string& dir) {
    std::filesystem::create_directories(dir);
    std::ofstream out(std::filesystem::path(dir) / "summary.json", std::ios::binary);
    if (!out) throw Error("cannot write summary.json in " + dir);
    out << build_summary(cfg, records).dump(1) << "\n";
}

namespace {

const char* kPalette[15] = {
    "#e6194b", "#3cb44b", "#ffe119", "#4363d8", "#f58231",
    "#911eb4", "#46f0f0", "#f032e6", "#bcf60c", "#fabebe",
    "#008080", "#e6beff", "#9a6324", "#800000", "#aaffc3"};

}  // namespace

void emit_plot(const std::vector<MetricsRecord>& records, const std::string& dir) {
    if (records.empty()) throw ContractError("emit_plot: no records");
    std::filesystem::create_directories(dir);
    std::set<int> client_ids;
    int max_round = 1;
    for (const MetricsRecord& rec : records) {
        client_ids.insert(rec.client);
        max_round = std::max(max_round, rec.round);
    }
    const double width = 820.0, height = 520.0;
    const double x0 = 60.0, y0 = 30.0, plot_w = 640.0, plot_h = 440.0;
    auto xpos = [&](int round) {
        if (max_round <= 1) return x0;
        return x0 + plot_w * static_cast<double>(round - 1) / (max_round - 1);
    };
    auto ypos = [&](double dice) { return y0 + plot_h * (1.0 - dice); };

    for (int client : client_ids) {
        std::map<int, std::vector<std::pair<int, double>>> series;  // task -> (round, dice)
        for (const MetricsRecord& rec : records) {
            if (rec.client != client) continue;
            for (int t = 0; t < static_cast<int>(rec.dice.size()); ++t) {
                series[t + 1].push_back({rec.round, rec.dice[t]});
            }
        }
        std::string name = "dice_client" + std::to_string(client) + ".svg";
        std::ofstream out(std::filesystem::path(dir) / name, std::ios::binary);
        if (!out) throw Error("cannot write plot " + name);
        out << "<?xml version=\"1.0\" encoding=\"UTF-8\"?>\n";
        out << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << width << "\" height=\""
            << height << "\" viewBox=\"0 0 " << width << " " << height << "\">\n";
        out << "  <rect x=\"0\" y=\"0\" width=\"" << width << "\" height=\"" << height
            << "\" fill=\"white\"/>\n";
        out << "  <text x=\"" << x0 << "\" y=\"20\" font-size=\"14\">client " << client
            << ": per-task Dice vs round</text>\n";
        // Axes cover Dice [0, 1] and rounds [0, max_round].
        out << "  <line x1=\"" << x0 << "\" y1=\"" << ypos(0.0) << "\" x2=\"" << x0 + plot_w
            << "\" y2=\"" << ypos(0.0) << "\" stroke=\"black\"/>\n";
        out << "  <line x1=\"" << x0 << "\" y1=\"" << ypos(0.0) << "\" x2=\"" << x0
            << "\" y2=\"" << ypos(1.0) << "\" stroke=\"black\"/>\n";
        for (int tick = 0; tick <= 10; tick += 2) {
            double dv = tick / 10.0;
            out << "  <text x=\"" << x0 - 34 << "\" y=\"" << ypos(dv) + 4
                << "\" font-size=\"11\">" << format_double(dv) << "</text>\n";
            out << "  <line x1=\"" << x0 - 4 << "\" y1=\"" << ypos(dv) << "\" x2=\"" << x0
                << "\" y2=\"" << ypos(dv) << "\" stroke=\"black\"/>\n";
        }
        out << "  <text x=\"" << x0 - 34 << "\" y=\"" << ypos(0.0) + 24
            << "\" font-size=\"11\">0</text>\n";
        out << "  <text x=\"" << xpos(max_round) - 8 << "\" y=\"" << ypos(0.0) + 24
            << "\" font-size=\"11\">" << max_round << "</text>\n";
        out << "  <text x=\"" << x0 + plot_w / 2 - 20 << "\" y=\"" << ypos(0.0) + 40
            << "\" font-size=\"12\">round</text>\n";
        for (const auto& [task, points] : series) {
            const char* color = kPalette[(task - 1) % 15];
            out << "  <polyline fill=\"none\" stroke=\"" << color << "\" stroke-width=\"1.5\""
                << " points=\"";
            for (size_t i = 0; i < points.size(); ++i) {
                if (i) out << " ";
                out << format_double(xpos(points[i].first)) << ","
                    << format_double(ypos(points[i].second));
            }
            out << "\"/>\n";
            if (points.size() == 1) {
                out << "  <circle cx=\"" << format_double(xpos(points[0].first)) << "\" cy=\""
                    << format_double(ypos(points[0].second)) << "\" r=\"2.5\" fill=\"" << color
                    << "\"/>\n";
            }
            double ly = y0 + 14.0 * task;
            out << "  <rect x=\"" << x0 + plot_w + 16 << "\" y=\"" << ly - 8
                << "\" width=\"10\" height=\"10\" fill=\"" << color << "\"/>\n";
            out << "  <text x=\"" << x0 + plot_w + 32 << "\" y=\"" << ly
                << "\" font-size=\"11\">task " << task << "</text>\n";
        }
        out << "</svg>\n";
    }
}

}  // namespace feddah
