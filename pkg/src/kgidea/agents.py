"""Five-stage pipeline: plan, retrieve, evaluate, explore, hypothesize.

Stages talk to a chat backend through prompts rendered from the packaged
templates.  Every prompt and response is captured verbatim in a
``PipelineTranscript``; parsed stage outputs are attached as artifacts that
point back at the message that produced them.  The exploration stage is
tool-only and never calls the backend.
"""

from __future__ import annotations

import json
import logging
import re
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Any, Iterable, Sequence

from .errors import KgError, StageError, ValidationError
from .graph import FORMAT_VERSION, KnowledgeGraph
from .ingestion import token_estimate
from .llm import load_template, render_template
from .retrieval import ChunkStore, Evidence, hybrid_evidence, render_evidence
from .traversal import (
    ALGORITHMS,
    TraversalOptions,
    TraversalReport,
    traverse_all_pairs,
)

logger = logging.getLogger(__name__)

ROLES = ("user", "planner", "hybrid", "evaluator", "creative", "engineer", "system")
CONTEXT_LABELS = ("chunk_hits", "subgraph", "relationships", "truncation")
QUERY_MODES = ("concatenated", "subquestion_only")

ENGINEER_HEADINGS = (
    ("hypothesis", "Hypothesis:"),
    ("justification", "Justification:"),
    ("expected_properties", "Expected Material Properties for Experimental Evaluation:"),
    ("challenges", "Foreseeable Implementation Challenges:"),
    ("reasoning_paths", "Knowledge Graph Reasoning Path(s) Used:"),
)
_HEADING_FOR = {title: name for name, title in ENGINEER_HEADINGS}

_PLANNER_HINT = (
    'Reply with a numbered list of sub-questions followed by a "KEYWORDS:" line '
    'and a "SYNONYMS:" line, both comma-separated.'
)
_ENGINEER_HINT = (
    "Reply using exactly these five headings, each on its own line with content "
    "below it: " + ", ".join(f'"{title}"' for _, title in ENGINEER_HEADINGS) + "."
)

_REFORMAT_REQUEST = (
    "Your previous reply could not be parsed ({error}). {hint} "
    "Reply again in the requested format and include nothing else."
)


# ----------------------------------------------------------------------
# transcript plumbing


@dataclass(slots=True)
class AgentMessage:
    """One verbatim exchange entry; prompts carry role 'user' or 'system'."""

    role: str
    content: str
    injected_context: list[dict[str, Any]] = field(default_factory=list)

    def __post_init__(self) -> None:
        if self.role not in ROLES:
            raise ValidationError(f"message role must be one of {ROLES}")
        if not self.content:
            raise ValidationError("message content must be non-empty")
        for block in self.injected_context:
            if block.get("label") not in CONTEXT_LABELS:
                raise ValidationError(
                    f"context label must be one of {CONTEXT_LABELS}: {block!r}")

    def to_dict(self) -> dict[str, Any]:
        return {"role": self.role, "content": self.content,
                "injected_context": self.injected_context}


@dataclass(slots=True)
class StageArtifact:
    stage: str
    message_index: int
    payload: dict[str, Any]

    def to_dict(self) -> dict[str, Any]:
        return {"stage": self.stage, "message_index": self.message_index,
                "payload": self.payload}


@dataclass(slots=True)
class PipelineTranscript:
    """Ordered record of a pipeline run.

    Timings are wall-clock and therefore excluded from the canonical JSON
    form, which must be byte-identical across scripted reruns.
    """

    query: str = ""
    messages: list[AgentMessage] = field(default_factory=list)
    artifacts: list[StageArtifact] = field(default_factory=list)
    stages_run: list[str] = field(default_factory=list)
    token_counts: dict[str, int] = field(default_factory=dict)
    timings: dict[str, float] = field(default_factory=dict)
    error: dict[str, str] | None = None

    def add_message(self, message: AgentMessage, stage: str | None = None) -> int:
        self.messages.append(message)
        if stage is not None:
            self.token_counts[stage] = (
                self.token_counts.get(stage, 0) + token_estimate(message.content))
        return len(self.messages) - 1

    def record_artifact(self, stage: str, message_index: int,
                        payload: dict[str, Any]) -> None:
        self.artifacts.append(StageArtifact(stage, message_index, payload))

    def artifacts_for(self, stage: str) -> list[StageArtifact]:
        return [a for a in self.artifacts if a.stage == stage]

    def final_answer(self) -> str | None:
        for message in reversed(self.messages):
            if message.role == "engineer":
                return message.content
        return None

    def absorb(self, other: "PipelineTranscript") -> None:
        """Append another transcript's entries, shifting artifact indices."""
        offset = len(self.messages)
        self.messages.extend(other.messages)
        for artifact in other.artifacts:
            self.artifacts.append(StageArtifact(
                artifact.stage, artifact.message_index + offset, artifact.payload))
        for stage, count in other.token_counts.items():
            self.token_counts[stage] = self.token_counts.get(stage, 0) + count
        for stage, seconds in other.timings.items():
            self.timings[stage] = self.timings.get(stage, 0.0) + seconds

    def to_dict(self, include_timings: bool = False) -> dict[str, Any]:
        out: dict[str, Any] = {
            "format_version": FORMAT_VERSION,
            "query": self.query,
            "stages_run": list(self.stages_run),
            "messages": [m.to_dict() for m in self.messages],
            "artifacts": [a.to_dict() for a in self.artifacts],
            "token_counts": dict(self.token_counts),
            "error": self.error,
        }
        if include_timings:
            out["timings"] = dict(self.timings)
        return out

    def to_json(self, include_timings: bool = False) -> str:
        return json.dumps(self.to_dict(include_timings), sort_keys=True, indent=2,
                          ensure_ascii=False) + "\n"

    def save(self, path: str) -> None:
        with open(path, "w", encoding="utf-8") as fh:
            fh.write(self.to_json())


# ----------------------------------------------------------------------
# parsed stage outputs


@dataclass(slots=True)
class PlannerOutput:
    subquestions: list[str]
    keywords: list[str]
    synonyms: list[str]

    def to_dict(self) -> dict[str, Any]:
        return {"subquestions": self.subquestions, "keywords": self.keywords,
                "synonyms": self.synonyms}


@dataclass(slots=True)
class EvaluatorOutput:
    design_keywords: list[str]

    def to_dict(self) -> dict[str, Any]:
        return {"design_keywords": self.design_keywords}


@dataclass(slots=True)
class Hypothesis:
    hypothesis: str
    justification: str
    expected_properties: str
    challenges: str
    reasoning_paths: str

    def to_dict(self) -> dict[str, Any]:
        return {name: getattr(self, name) for name, _ in ENGINEER_HEADINGS}


# ----------------------------------------------------------------------
# response parsers (ValueError on format drift; the caller handles retries)


_NUMBERED_RE = re.compile(r"^\s*\d+[.)]\s+(\S.*?)\s*$")


def _split_listing(rest: str) -> list[str]:
    entries = []
    for part in rest.split(","):
        part = part.strip()
        if part.endswith("."):
            part = part[:-1].rstrip()
        if part:
            entries.append(part)
    return entries


def parse_planner_response(text: str) -> PlannerOutput:
    """Numbered sub-questions plus KEYWORDS/SYNONYMS listings.

    Unnumbered continuation lines extend the current sub-question; a blank
    line ends it.  The SYNONYMS line is optional, KEYWORDS is not.
    """
    subquestions: list[str] = []
    keywords: list[str] | None = None
    synonyms: list[str] = []
    open_item = False
    for line in text.splitlines():
        stripped = line.strip()
        label, sep, rest = stripped.partition(":")
        if sep and label == "KEYWORDS":
            keywords = _split_listing(rest)
            open_item = False
            continue
        if sep and label == "SYNONYMS":
            synonyms = _split_listing(rest)
            open_item = False
            continue
        numbered = _NUMBERED_RE.match(line)
        if numbered:
            subquestions.append(numbered.group(1))
            open_item = True
        elif not stripped:
            open_item = False
        elif open_item:
            subquestions[-1] += " " + stripped
    if not subquestions:
        raise ValueError("no numbered sub-questions found")
    if keywords is None:
        raise ValueError('no "KEYWORDS:" line found')
    return PlannerOutput(subquestions, keywords, synonyms)


def parse_evaluator_response(text: str) -> EvaluatorOutput:
    entries = []
    for part in text.split(";"):
        part = part.strip()
        if part.endswith("."):
            part = part[:-1].rstrip()
        if part:
            entries.append(part)
    if not entries:
        raise ValueError("no design keywords found (expected ';'-separated entries)")
    return EvaluatorOutput(entries)


def parse_engineer_response(text: str) -> Hypothesis:
    """Heading-keyed and order-free; all five sections must be present."""
    sections: dict[str, list[str]] = {}
    current: str | None = None
    for line in text.splitlines():
        name = _HEADING_FOR.get(line.strip())
        if name is not None:
            if name in sections:
                raise ValueError(f"heading {line.strip()!r} appears twice")
            sections[name] = []
            current = name
        elif current is not None:
            sections[current].append(line)
    missing = [title for name, title in ENGINEER_HEADINGS if name not in sections]
    if missing:
        raise ValueError(f"missing headings: {missing}")
    bodies: dict[str, str] = {}
    for name, title in ENGINEER_HEADINGS:
        body = "\n".join(sections[name]).strip()
        if not body:
            raise ValueError(f"empty section under {title!r}")
        bodies[name] = body
    return Hypothesis(**bodies)


# ----------------------------------------------------------------------
# stage runners


def _call_stage(llm, stage: str, prompt: str, parser, hint: str,
                transcript: PipelineTranscript | None = None,
                injected_context: list[dict[str, Any]] | None = None,
                max_attempts: int = 2,
                context_budget: int | None = None):
    """One exchange with up to one reformat retry; returns (parsed, raw, index)."""
    if context_budget is not None and token_estimate(prompt) > context_budget:
        logger.warning("%s prompt estimate %d exceeds budget %d",
                       stage, token_estimate(prompt), context_budget)
    messages = [{"role": "user", "content": prompt}]
    if transcript is not None:
        transcript.add_message(
            AgentMessage("user", prompt, list(injected_context or [])), stage)
    raw = ""
    error = ""
    index = -1
    for attempt in range(max_attempts):
        if attempt:
            followup = _REFORMAT_REQUEST.format(error=error, hint=hint)
            messages.append({"role": "assistant", "content": raw})
            messages.append({"role": "user", "content": followup})
            if transcript is not None:
                transcript.add_message(AgentMessage("user", followup), stage)
        raw = llm.complete(messages)
        if transcript is not None:
            index = transcript.add_message(AgentMessage(stage, raw), stage)
        try:
            return parser(raw), raw, index
        except ValueError as exc:
            error = str(exc)
            logger.warning("%s parse failure (attempt %d): %s", stage, attempt + 1, error)
    raise StageError(stage, f"unparseable after {max_attempts} attempts ({error})",
                     raw_response=raw)


def run_planner(llm, user_query: str, *, template_dir: str | None = None,
                transcript: PipelineTranscript | None = None) -> PlannerOutput:
    """Decompose the query into design sub-questions plus keyword listings."""
    if not user_query:
        raise ValidationError("user query must be non-empty")
    template = load_template("planner.txt", template_dir)
    prompt = render_template(template, QUERY=user_query)
    parsed, _, index = _call_stage(llm, "planner", prompt, parse_planner_response,
                                   _PLANNER_HINT, transcript)
    if transcript is not None:
        transcript.record_artifact("planner", index, parsed.to_dict())
    return parsed


def _trimmed(graph: KnowledgeGraph, evidence: Evidence) -> Evidence:
    hits = evidence.hits[:-1]
    subgraph = graph.subgraph_for_chunks([h.chunk_id for h in hits])
    return Evidence(evidence.query, hits, subgraph, render_evidence(hits, subgraph))


def run_hybrid(llm, store: ChunkStore, pfas_graph: KnowledgeGraph, user_query: str,
               subquestion: str, *, backend, k: int = 5,
               query_mode: str = "concatenated", context_budget: int | None = None,
               template_dir: str | None = None,
               transcript: PipelineTranscript | None = None) -> tuple[str, Evidence]:
    """Answer one sub-question from top-k chunks plus their provenance subgraph.

    When the prompt would blow the context budget (estimated tokens), hits are
    dropped from the low-similarity end one at a time and the truncation is
    recorded in the transcript.
    """
    if not subquestion:
        raise ValidationError("subquestion must be non-empty")
    if query_mode not in QUERY_MODES:
        raise ValidationError(f"query_mode must be one of {QUERY_MODES}")
    retrieval_query = subquestion
    if query_mode == "concatenated" and user_query:
        retrieval_query = user_query + "\n" + subquestion
    evidence = hybrid_evidence(store, pfas_graph, backend, retrieval_query, k)
    template = load_template("hybrid.txt", template_dir)

    def build_prompt(ev: Evidence) -> str:
        return render_template(template, QUERY=user_query, SUBQUESTION=subquestion,
                               EVIDENCE=ev.rendered or "(no evidence retrieved)")

    prompt = build_prompt(evidence)
    dropped = 0
    while (context_budget is not None and token_estimate(prompt) > context_budget
           and evidence.hits):
        evidence = _trimmed(pfas_graph, evidence)
        dropped += 1
        prompt = build_prompt(evidence)
    if dropped:
        logger.warning("hybrid evidence truncated: dropped %d lowest-similarity hits",
                       dropped)
    injected: list[dict[str, Any]] = [
        {"label": "chunk_hits", "payload": [h.chunk_id for h in evidence.hits]},
        {"label": "subgraph", "payload": {"nodes": evidence.subgraph.node_count,
                                          "edges": evidence.subgraph.edge_count}},
    ]
    if dropped:
        injected.append({"label": "truncation", "payload": {"dropped_hits": dropped}})

    def non_empty(raw: str) -> str:
        if not raw.strip():
            raise ValueError("empty completion")
        return raw

    answer, _, index = _call_stage(llm, "hybrid", prompt, non_empty, "",
                                   transcript, injected, max_attempts=1,
                                   context_budget=context_budget)
    if transcript is not None:
        payload = evidence.to_dict()
        payload["subquestion"] = subquestion
        payload["truncated_hits"] = dropped
        transcript.record_artifact("hybrid", index, payload)
    return answer, evidence


def run_evaluator(llm, hybrid_answers: Sequence[str], *,
                  template_dir: str | None = None,
                  transcript: PipelineTranscript | None = None) -> EvaluatorOutput:
    """Distill the answers into ';'-separated design keywords with metrics.

    No reformat retry here: an empty listing is a hard stage error.
    """
    answers = list(hybrid_answers)
    if not answers:
        raise ValidationError("at least one answer is required")
    digest = "\n\n".join(f"Answer {i + 1}:\n{a}" for i, a in enumerate(answers))
    template = load_template("evaluator.txt", template_dir)
    prompt = render_template(template, ANSWERS=digest)
    parsed, _, index = _call_stage(llm, "evaluator", prompt, parse_evaluator_response,
                                   "", transcript, max_attempts=1)
    if transcript is not None:
        transcript.record_artifact("evaluator", index, parsed.to_dict())
    return parsed


def run_creative(index, properties_graph: KnowledgeGraph,
                 evaluator_output: EvaluatorOutput | Iterable[str], algorithm: str,
                 options: TraversalOptions | None = None, *, backend,
                 transcript: PipelineTranscript | None = None) -> TraversalReport:
    """Tool-only exploration stage: match keywords to nodes, enumerate paths.

    Never calls the chat backend; traversal failures surface as stage errors.
    """
    if isinstance(evaluator_output, EvaluatorOutput):
        keywords = evaluator_output.design_keywords
    else:
        keywords = list(evaluator_output)
    options = options or TraversalOptions()
    try:
        report = traverse_all_pairs(properties_graph, index, backend, keywords,
                                    algorithm, options)
    except StageError:
        raise
    except KgError as exc:
        raise StageError("creative", str(exc)) from exc
    if transcript is not None:
        content = report.rendered or "(no connecting paths found)"
        injected = [
            {"label": "relationships", "payload": report.rendered},
            {"label": "subgraph", "payload": {"nodes": report.subgraph.node_count,
                                              "edges": report.subgraph.edge_count}},
        ]
        message_index = transcript.add_message(
            AgentMessage("creative", content, injected), "creative")
        transcript.record_artifact("creative", message_index, {
            "algorithm": algorithm,
            "options": {"n": options.n, "depth_limit": options.depth_limit,
                        "stop": options.stop, "directed": options.directed},
            "report": report.to_dict(),
        })
    return report


def run_engineer(llm, user_query: str, hybrid_answers: Sequence[str] | None,
                 traversal_report: TraversalReport | None, *,
                 template_dir: str | None = None,
                 transcript: PipelineTranscript | None = None,
                 allow_evidence_only: bool = False,
                 context_budget: int | None = None) -> Hypothesis:
    """Produce the five-section hypothesis from answers plus relationships."""
    rendered = traversal_report.rendered if traversal_report is not None else ""
    if not rendered and not allow_evidence_only:
        raise StageError("engineer",
                         "no graph relationships to reason over and evidence-only "
                         "mode is disabled")
    answers = list(hybrid_answers or [])
    digest = "\n\n".join(f"Answer {i + 1}:\n{a}" for i, a in enumerate(answers))
    template = load_template("engineer.txt", template_dir)
    prompt = render_template(template, QUERY=user_query, ANSWERS=digest or "(none)",
                             RELATIONSHIPS=rendered or "(none)")
    parsed, _, index = _call_stage(llm, "engineer", prompt, parse_engineer_response,
                                   _ENGINEER_HINT, transcript,
                                   context_budget=context_budget)
    if transcript is not None:
        transcript.record_artifact("engineer", index, parsed.to_dict())
    return parsed


# ----------------------------------------------------------------------
# pipeline driver


@dataclass(frozen=True, slots=True)
class StageFlags:
    """Which stages a run executes; the engineer can never be switched off."""

    planner: bool = True
    hybrid: bool = True
    evaluator: bool = True
    creative: bool = True
    engineer: bool = True

    def enabled(self) -> list[str]:
        return [name for name in ("planner", "hybrid", "evaluator", "creative",
                                  "engineer") if getattr(self, name)]


@dataclass(slots=True)
class PipelineConfig:
    """Everything a pipeline run needs, already loaded into memory."""

    llm: Any
    embedder: Any
    chunk_store: ChunkStore | None = None
    domain_graph: KnowledgeGraph | None = None
    concept_graph: KnowledgeGraph | None = None
    concept_index: Any = None
    algorithm: str = "shortest"
    options: TraversalOptions = field(default_factory=TraversalOptions)
    k: int = 5
    query_mode: str = "concatenated"
    context_budget: int = 40000
    stages: StageFlags = field(default_factory=StageFlags)
    allow_evidence_only: bool = False
    template_dir: str | None = None
    jobs: int = 1


def _validate_pipeline(config: PipelineConfig, user_query: str) -> None:
    if not user_query:
        raise ValidationError("user query must be non-empty")
    if not config.stages.engineer:
        raise ValidationError("the engineer stage cannot be disabled")
    if config.stages.evaluator and not config.stages.hybrid:
        raise ValidationError("the evaluator stage needs hybrid answers")
    if config.stages.creative and not config.stages.evaluator:
        raise ValidationError("the creative stage needs evaluator keywords")
    if config.stages.hybrid and (config.chunk_store is None
                                 or config.domain_graph is None):
        raise ValidationError("hybrid stage needs a chunk store and a domain graph")
    if config.stages.creative and (config.concept_graph is None
                                   or config.concept_index is None):
        raise ValidationError("creative stage needs a concept graph and its index")
    if config.algorithm not in ALGORITHMS:
        raise ValidationError(f"algorithm must be one of {ALGORITHMS}")
    if config.query_mode not in QUERY_MODES:
        raise ValidationError(f"query_mode must be one of {QUERY_MODES}")
    if config.jobs < 1:
        raise ValidationError("jobs must be >= 1")


def _run_hybrid_stage(config: PipelineConfig, user_query: str,
                      subquestions: Sequence[str],
                      transcript: PipelineTranscript) -> list[str]:
    def one(subquestion: str, target: PipelineTranscript) -> str:
        answer, _ = run_hybrid(
            config.llm, config.chunk_store, config.domain_graph, user_query,
            subquestion, backend=config.embedder, k=config.k,
            query_mode=config.query_mode, context_budget=config.context_budget,
            template_dir=config.template_dir, transcript=target)
        return answer

    if config.jobs <= 1 or len(subquestions) <= 1:
        return [one(sub, transcript) for sub in subquestions]
    # concurrent retrieval: each call writes a private transcript, merged
    # afterwards in sub-question order so the result stays deterministic
    side = [PipelineTranscript(query=user_query) for _ in subquestions]
    with ThreadPoolExecutor(max_workers=min(config.jobs, len(subquestions))) as pool:
        answers = list(pool.map(one, subquestions, side))
    for part in side:
        transcript.absorb(part)
    return answers


def run_pipeline(config: PipelineConfig, user_query: str) -> PipelineTranscript:
    """Execute the configured stages; a stage error yields a partial transcript.

    The returned transcript carries ``error`` when a stage failed; callers
    decide whether that is fatal.
    """
    _validate_pipeline(config, user_query)
    transcript = PipelineTranscript(query=user_query)
    try:
        _execute(config, user_query, transcript)
    except StageError as exc:
        logger.error("pipeline aborted at stage %s: %s", exc.stage, exc)
        transcript.error = {"stage": exc.stage, "message": str(exc),
                            "raw_response": exc.raw_response}
    return transcript


def _execute(config: PipelineConfig, user_query: str,
             transcript: PipelineTranscript) -> None:
    def timed(stage: str, thunk):
        start = time.perf_counter()
        try:
            return thunk()
        finally:
            transcript.timings[stage] = (
                transcript.timings.get(stage, 0.0) + time.perf_counter() - start)

    subquestions = [user_query]
    if config.stages.planner:
        planner_out = timed("planner", lambda: run_planner(
            config.llm, user_query, template_dir=config.template_dir,
            transcript=transcript))
        transcript.stages_run.append("planner")
        subquestions = planner_out.subquestions

    answers: list[str] = []
    if config.stages.hybrid:
        answers = timed("hybrid", lambda: _run_hybrid_stage(
            config, user_query, subquestions, transcript))
        transcript.stages_run.append("hybrid")

    evaluator_out: EvaluatorOutput | None = None
    if config.stages.evaluator:
        evaluator_out = timed("evaluator", lambda: run_evaluator(
            config.llm, answers, template_dir=config.template_dir,
            transcript=transcript))
        transcript.stages_run.append("evaluator")

    report: TraversalReport | None = None
    if config.stages.creative:
        report = timed("creative", lambda: run_creative(
            config.concept_index, config.concept_graph, evaluator_out,
            config.algorithm, config.options, backend=config.embedder,
            transcript=transcript))
        transcript.stages_run.append("creative")

    timed("engineer", lambda: run_engineer(
        config.llm, user_query, answers, report, template_dir=config.template_dir,
        transcript=transcript, allow_evidence_only=config.allow_evidence_only,
        context_budget=config.context_budget))
    transcript.stages_run.append("engineer")
