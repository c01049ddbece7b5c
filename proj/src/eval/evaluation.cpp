#include "dstage/eval/evaluation.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>

#include "dstage/llm/extract.hpp"

namespace dstage::eval {
namespace {

std::optional<double> mean_of(const std::vector<RowScore>& rows, std::optional<double> RowScore::*field) {
  double sum = 0.0;
  std::size_t n = 0;
  for (const auto& row : rows) {
    if (row.simulated_decisions.empty() || !(row.*field)) continue;
    sum += *(row.*field);
    ++n;
  }
  if (n == 0) return std::nullopt;
  return sum / static_cast<double>(n);
}

Json optional_number(const std::optional<double>& v) { return v ? Json(*v) : Json(nullptr); }

std::string format_score(const std::optional<double>& v) {
  if (!v) return "n/a";
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.2f", *v);
  return buf;
}

}  // namespace

HistoricalTimeline HistoricalTimeline::from_json(const Json& doc) {
  HistoricalTimeline timeline;
  try {
    timeline.scenario = doc.value("scenario", std::string{});
    timeline.expected_category = doc.at("expected_category").get<std::string>();
    const auto& rows = doc.at("rows");
    for (std::size_t i = 0; i < rows.size(); ++i) {
      const auto& r = rows[i];
      TimelineRow row{CalendarDate::parse(r.at("date").get<std::string>()), r.at("event").get<std::string>(),
                      r.at("actions").get<std::string>()};
      if (!timeline.rows.empty() && !(timeline.rows.back().date < row.date))
        throw ParseError("rows[" + std::to_string(i) + "].date", "dates must be strictly increasing");
      timeline.rows.push_back(std::move(row));
    }
  } catch (const Json::exception& e) {
    throw ParseError("timeline", e.what());
  }
  return timeline;
}

HistoricalTimeline HistoricalTimeline::load(const std::filesystem::path& path) {
  return from_json(read_json_file(path));
}

Json to_json(const HistoricalTimeline& timeline) {
  Json rows = Json::array();
  for (const auto& r : timeline.rows)
    rows.push_back({{"date", r.date.to_string()}, {"event", r.event}, {"actions", r.actions}});
  return {{"scenario", timeline.scenario},
          {"expected_category", timeline.expected_category},
          {"rows", std::move(rows)}};
}

std::vector<AlignedRow> align(const sim::RunLog& run, const HistoricalTimeline& timeline) {
  std::vector<AlignedRow> out;
  out.reserve(timeline.rows.size());
  for (const auto& row : timeline.rows) {
    AlignedRow aligned{row, {}};
    for (const auto& day : run.days) {
      if (!(day.calendar_date == row.date)) continue;
      for (const auto& d : day.decisions) {
        const auto* actor = run.cast.find(d.agent_id);
        if (!aligned.simulated.empty()) aligned.simulated += "\n";
        aligned.simulated += (actor ? actor->intrinsic.name : d.agent_id) + ": " + d.text;
      }
    }
    out.push_back(std::move(aligned));
  }
  return out;
}

double cosine_similarity(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size())
    throw Error("embedding lengths differ: " + std::to_string(a.size()) + " vs " + std::to_string(b.size()));
  double dot = 0.0, na = 0.0, nb = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    dot += a[i] * b[i];
    na += a[i] * a[i];
    nb += b[i] * b[i];
  }
  if (!(na > 0.0) || !(nb > 0.0)) throw DegenerateEmbeddingError();
  return dot / (std::sqrt(na) * std::sqrt(nb));
}

double embedding_similarity(std::span<const double> a, std::span<const double> b) {
  return std::clamp(100.0 * cosine_similarity(a, b), 0.0, 100.0);
}

double embedding_similarity(std::string_view a, std::string_view b, llm::Gateway& embedder) {
  const auto va = embedder.embed(a);
  const auto vb = embedder.embed(b);
  return embedding_similarity(va, vb);
}

double judge_similarity(std::string_view a, std::string_view b, llm::Gateway& gateway,
                        const llm::PromptLibrary& prompts) {
  const auto prompt =
      prompts.render("judge_similarity.v1", {{"historical", std::string(a)}, {"simulated", std::string(b)}});
  const auto request =
      gateway.request(llm::roles::kJudge, prompt.system, prompt.user, std::string("judge_scalar.v1"));
  for (int attempt = 0; attempt < 2; ++attempt)
    if (auto score = llm::extract_score(gateway.complete(request))) return *score;
  throw EvaluationError("similarity judge output unparseable after retry");
}

SimilarityReport evaluate_run(const sim::RunLog& run, const HistoricalTimeline& timeline, llm::Gateway& embedder,
                              llm::Gateway& judge, EvaluateOptions options, const llm::PromptLibrary& prompts) {
  if (!run.sealed) throw EvaluationError("run '" + run.run_id + "' is not sealed");
  SimilarityReport report;
  std::string all_historical;
  std::string all_simulated;
  for (auto& aligned : align(run, timeline)) {
    RowScore row;
    row.date = aligned.row.date;
    row.historical_actions = aligned.row.actions;
    row.simulated_decisions = std::move(aligned.simulated);
    if (!row.simulated_decisions.empty()) {
      all_historical += (all_historical.empty() ? "" : "\n") + row.historical_actions;
      all_simulated += (all_simulated.empty() ? "" : "\n") + row.simulated_decisions;
      try {
        row.embedding_score = embedding_similarity(row.historical_actions, row.simulated_decisions, embedder);
      } catch (const Error& e) {
        row.errors.push_back(std::string("embedding: ") + e.what());
      }
      if (options.use_judge) {
        try {
          row.judge_score = judge_similarity(row.historical_actions, row.simulated_decisions, judge, prompts);
        } catch (const Error& e) {
          row.errors.push_back(std::string("judge: ") + e.what());
        }
      }
    }
    report.per_row.push_back(std::move(row));
  }
  report.mean_embedding = mean_of(report.per_row, &RowScore::embedding_score);
  report.mean_judge = mean_of(report.per_row, &RowScore::judge_score);

  if (options.whole_transcript && !all_simulated.empty()) {
    try {
      report.transcript_embedding = embedding_similarity(all_historical, all_simulated, embedder);
    } catch (const Error&) {
    }
    if (options.use_judge) {
      try {
        report.transcript_judge = judge_similarity(all_historical, all_simulated, judge, prompts);
      } catch (const Error&) {
      }
    }
  }

  report.outcome_match.expected_category = timeline.expected_category;
  report.outcome_match.actual_category = run.outcome ? run.outcome->category : std::string(sim::kUndetermined);
  report.outcome_match.matched = report.outcome_match.expected_category == report.outcome_match.actual_category;
  return report;
}

Json to_json(const SimilarityReport& report) {
  Json rows = Json::array();
  for (const auto& r : report.per_row) {
    rows.push_back({{"date", r.date.to_string()},
                    {"historical_actions", r.historical_actions},
                    {"simulated_decisions", r.simulated_decisions},
                    {"embedding_score", optional_number(r.embedding_score)},
                    {"judge_score", optional_number(r.judge_score)},
                    {"errors", r.errors}});
  }
  return {{"per_row", std::move(rows)},
          {"mean_embedding", optional_number(report.mean_embedding)},
          {"mean_judge", optional_number(report.mean_judge)},
          {"transcript_embedding", optional_number(report.transcript_embedding)},
          {"transcript_judge", optional_number(report.transcript_judge)},
          {"outcome_match",
           {{"expected_category", report.outcome_match.expected_category},
            {"actual_category", report.outcome_match.actual_category},
            {"matched", report.outcome_match.matched}}}};
}

std::string report_text(const SimilarityReport& report) {
  std::string out = "date        embedding  judge   errors\n";
  for (const auto& r : report.per_row) {
    char line[96];
    std::snprintf(line, sizeof line, "%-10s  %9s  %6s  ", r.date.to_string().c_str(),
                  format_score(r.embedding_score).c_str(), format_score(r.judge_score).c_str());
    out += line;
    out += r.simulated_decisions.empty() ? "(no simulated counterpart)" : std::to_string(r.errors.size());
    out += "\n";
  }
  out += "mean embedding similarity: " + format_score(report.mean_embedding) + "\n";
  out += "mean judge similarity: " + format_score(report.mean_judge) + "\n";
  out += "whole-transcript embedding similarity: " + format_score(report.transcript_embedding) + "\n";
  out += "whole-transcript judge similarity: " + format_score(report.transcript_judge) + "\n";
  out += "outcome: expected " + report.outcome_match.expected_category + ", got " +
         report.outcome_match.actual_category + (report.outcome_match.matched ? " (match)" : " (mismatch)") + "\n";
  return out;
}

}  // namespace dstage::eval
