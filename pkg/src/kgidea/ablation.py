"""Ablation harness: run stage-subset configurations and judge the answers.

Five fixed configurations strip the pipeline down stage by stage.  Each
configuration's final answer is blinded behind a seeded alias and scored by a
judge backend against a six-criterion rubric; results land in a report plus
flat CSV files.
"""

from __future__ import annotations

import csv
import dataclasses
import json
import logging
import random
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path
from typing import Any

from .agents import PipelineConfig, PipelineTranscript, StageFlags, run_pipeline
from .errors import JudgeError, ValidationError
from .ingestion import first_json_object
from .llm import load_template, render_template

logger = logging.getLogger(__name__)

CRITERIA = (
    "task_decomposition",
    "context_enrichment",
    "cross_subtask_integration",
    "deep_reasoning",
    "novelty",
    "source_attribution",
)

CONFIG_ORDER = (
    "all_components",
    "expanded_retrieval",
    "direct_graph_exploration",
    "direct_retrieval",
    "llm_only",
)

# stage subsets per configuration (planner, hybrid, evaluator, creative, engineer)
STAGE_MATRIX: dict[str, StageFlags] = {
    "all_components": StageFlags(True, True, True, True, True),
    "expanded_retrieval": StageFlags(True, True, False, False, True),
    "direct_graph_exploration": StageFlags(False, True, True, True, True),
    "direct_retrieval": StageFlags(False, True, False, False, True),
    "llm_only": StageFlags(False, False, False, False, True),
}

MIN_SCORE = 0
MAX_SCORE = 10


@dataclass(frozen=True, slots=True)
class AblationConfig:
    name: str
    stages: StageFlags

    def __post_init__(self) -> None:
        if self.name not in CONFIG_ORDER:
            raise ValidationError(f"config name must be one of {CONFIG_ORDER}")
        if not self.stages.engineer:
            raise ValidationError("the engineer stage is always enabled")
        if self.stages != STAGE_MATRIX[self.name]:
            raise ValidationError(
                f"stage set for {self.name!r} must be {STAGE_MATRIX[self.name]}")


def ablation_configs() -> list[AblationConfig]:
    return [AblationConfig(name, STAGE_MATRIX[name]) for name in CONFIG_ORDER]


@dataclass(slots=True)
class CriterionScore:
    criterion: str
    score: int
    judge_rationale: str = ""

    def __post_init__(self) -> None:
        if self.criterion not in CRITERIA:
            raise ValidationError(f"criterion must be one of {CRITERIA}")
        if not MIN_SCORE <= self.score <= MAX_SCORE:
            raise ValidationError(
                f"score {self.score} outside [{MIN_SCORE}, {MAX_SCORE}]")

    def to_dict(self) -> dict[str, Any]:
        return {"criterion": self.criterion, "score": self.score,
                "judge_rationale": self.judge_rationale}


@dataclass(slots=True)
class AblationReport:
    query: str
    blinding: dict[str, str] = field(default_factory=dict)
    scores: dict[str, list[CriterionScore]] = field(default_factory=dict)
    means: dict[str, float] = field(default_factory=dict)
    raw_judge_responses: dict[str, str] = field(default_factory=dict)
    stage_sets: dict[str, list[str]] = field(default_factory=dict)
    failures: dict[str, str] = field(default_factory=dict)
    # full transcripts stay in memory only; the JSON report records stage sets
    transcripts: dict[str, PipelineTranscript] = field(default_factory=dict)

    def to_dict(self) -> dict[str, Any]:
        return {
            "query": self.query,
            "blinding": dict(self.blinding),
            "scores": {name: [s.to_dict() for s in scored]
                       for name, scored in self.scores.items()},
            "means": dict(self.means),
            "raw_judge_responses": dict(self.raw_judge_responses),
            "stage_sets": {name: list(stages)
                           for name, stages in self.stage_sets.items()},
            "failures": dict(self.failures),
        }

    def save(self, path: str | Path) -> None:
        with open(path, "w", encoding="utf-8") as fh:
            json.dump(self.to_dict(), fh, sort_keys=True, indent=2,
                      ensure_ascii=False)
            fh.write("\n")


# ----------------------------------------------------------------------
# rubric handling


def load_rubric(path: str | Path | None = None) -> list[dict[str, str]]:
    """Rubric entries ({key, name, description}) in fixed criterion order."""
    if path is None:
        text = resources.files("kgidea").joinpath(
            "templates", "rubric.json").read_text(encoding="utf-8")
    else:
        text = Path(path).read_text(encoding="utf-8")
    data = json.loads(text)
    criteria = data.get("criteria")
    if not isinstance(criteria, list):
        raise ValidationError("rubric file must hold a 'criteria' array")
    for entry in criteria:
        if not isinstance(entry, dict) or not all(
                isinstance(entry.get(k), str) and entry.get(k)
                for k in ("key", "name", "description")):
            raise ValidationError(f"bad rubric entry: {entry!r}")
    keys = tuple(entry["key"] for entry in criteria)
    if keys != CRITERIA:
        raise ValidationError(
            f"rubric keys must be exactly {CRITERIA} in order, got {keys}")
    return criteria


def render_rubric(criteria: list[dict[str, str]]) -> str:
    return "\n".join(f"- {c['key']} ({c['name']}): {c['description']}"
                     for c in criteria)


# ----------------------------------------------------------------------
# judging


def _parse_judge_response(raw: str, keys: list[str]) -> list[CriterionScore]:
    obj = first_json_object(raw)
    if obj is None:
        raise ValueError("no JSON object found in the judge reply")
    scores: list[CriterionScore] = []
    for key in keys:
        entry = obj.get(key)
        if entry is None:
            raise ValueError(f"criterion {key!r} missing from the reply")
        if isinstance(entry, dict):
            score = entry.get("score")
            rationale = entry.get("rationale", "")
        else:
            score = entry
            rationale = ""
        if isinstance(score, bool) or not isinstance(score, int):
            raise ValueError(f"criterion {key!r} lacks an integer score")
        if not isinstance(rationale, str):
            rationale = str(rationale)
        clamped = min(MAX_SCORE, max(MIN_SCORE, score))
        if clamped != score:
            logger.warning("judge score %d for %r out of range; clamped to %d",
                           score, key, clamped)
        scores.append(CriterionScore(key, clamped, rationale))
    return scores


def _judge_with_raw(judge_llm, query: str, final_answer: str,
                    criteria: list[dict[str, str]], *, alias: str = "anonymous",
                    template_dir: str | None = None
                    ) -> tuple[list[CriterionScore], str]:
    if not final_answer:
        raise ValidationError("final answer must be non-empty")
    keys = [c["key"] for c in criteria]
    template = load_template("judge.txt", template_dir)
    prompt = render_template(template, RUBRIC=render_rubric(criteria), QUERY=query,
                             ALIAS=alias, ANSWER=final_answer)
    messages = [{"role": "user", "content": prompt}]
    raw = ""
    error = ""
    for attempt in range(2):
        if attempt:
            messages.append({"role": "assistant", "content": raw})
            messages.append({"role": "user", "content":
                             f"Your previous reply could not be parsed ({error}). "
                             "Reply with only the JSON object described above."})
        raw = judge_llm.complete(messages)
        try:
            return _parse_judge_response(raw, keys), raw
        except ValueError as exc:
            error = str(exc)
            logger.warning("judge parse failure (attempt %d): %s", attempt + 1, error)
    raise JudgeError(f"judge reply unparseable after 2 attempts ({error})",
                     raw_response=raw)


def judge(judge_llm, query: str, transcript_final_answer: str,
          criteria: list[dict[str, str]] | None = None, *,
          alias: str = "anonymous",
          template_dir: str | None = None) -> list[CriterionScore]:
    """Score one blinded answer against the rubric; one reformat retry."""
    criteria = criteria if criteria is not None else load_rubric()
    scores, _ = _judge_with_raw(judge_llm, query, transcript_final_answer, criteria,
                                alias=alias, template_dir=template_dir)
    return scores


# ----------------------------------------------------------------------
# running configurations


def run_configuration(config: AblationConfig | str, base: PipelineConfig,
                      query: str) -> PipelineTranscript:
    """Run one stage subset; exploration always uses the shortest-path search."""
    if isinstance(config, str):
        if config not in STAGE_MATRIX:
            raise ValidationError(f"unknown configuration {config!r}")
        config = AblationConfig(config, STAGE_MATRIX[config])
    derived = dataclasses.replace(base, stages=config.stages, algorithm="shortest",
                                  allow_evidence_only=True)
    return run_pipeline(derived, query)


def run_ablation(base_config: PipelineConfig, query: str, judge_backend, *,
                 seed: int = 0, rubric_path: str | Path | None = None,
                 template_dir: str | None = None) -> AblationReport:
    """All five configurations, blinded and judged; failures never stop the run."""
    if not query:
        raise ValidationError("query must be non-empty")
    criteria = load_rubric(rubric_path)
    rng = random.Random(seed)
    aliases = [f"System {letter}" for letter in "ABCDE"]
    rng.shuffle(aliases)
    report = AblationReport(query=query, blinding=dict(zip(CONFIG_ORDER, aliases)))

    for name in CONFIG_ORDER:
        transcript = run_configuration(name, base_config, query)
        report.transcripts[name] = transcript
        report.stage_sets[name] = list(transcript.stages_run)
        if transcript.error is not None:
            report.failures[name] = (
                f"{transcript.error['stage']}: {transcript.error['message']}")
            logger.error("configuration %s failed: %s", name, report.failures[name])
            continue
        answer = transcript.final_answer()
        if answer is None:
            report.failures[name] = "transcript holds no engineer answer"
            continue
        try:
            scores, raw = _judge_with_raw(judge_backend, query, answer, criteria,
                                          alias=report.blinding[name],
                                          template_dir=template_dir)
        except JudgeError as exc:
            report.failures[name] = str(exc)
            logger.error("judging %s failed: %s", name, exc)
            continue
        report.scores[name] = scores
        report.raw_judge_responses[name] = raw
        report.means[name] = sum(s.score for s in scores) / len(scores)
    return report


# ----------------------------------------------------------------------
# CSV output (config, criterion, score) plus a means series for plotting


def write_scores_csv(report: AblationReport, path: str | Path) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["config", "criterion", "score"])
        for name in CONFIG_ORDER:
            for scored in report.scores.get(name, []):
                writer.writerow([name, scored.criterion, scored.score])


def read_scores_csv(path: str | Path) -> dict[str, dict[str, int]]:
    out: dict[str, dict[str, int]] = {}
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames != ["config", "criterion", "score"]:
            raise ValidationError(f"unexpected CSV header: {reader.fieldnames}")
        for row in reader:
            out.setdefault(row["config"], {})[row["criterion"]] = int(row["score"])
    return out


def write_means_csv(report: AblationReport, path: str | Path) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["config", "mean_score"])
        for name in CONFIG_ORDER:
            if name in report.means:
                writer.writerow([name, repr(report.means[name])])
