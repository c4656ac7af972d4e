"""Shared test fixtures: two hand-built concept graphs, keyword maps with
known nearest nodes, and scripted agent replies for offline pipeline runs.

``AliasEmbedder`` pins chosen query strings to node labels so keyword
resolution is exact: an aliased query embeds identically to its target
label and nothing else reaches similarity 1.0.
"""

from __future__ import annotations

import json

from kgidea.embedding import DeterministicEmbedder, EmbeddingIndex
from kgidea.graph import KnowledgeGraph
from kgidea.ingestion import Chunk, token_estimate
from kgidea.retrieval import ChunkStore

USER_QUERY = ("What are the specific material properties of PFAS that make it "
              "used for the application of biomedical tubing?")

# ----------------------------------------------------------------------
# material-properties graph (21 relationship sentences, 10 nodes)

PROPERTY_TRIPLES = [
    ("Tensile strength", "measures", "mechanical properties"),
    ("Tensile strength", "implies good", "adhesion"),
    ("mechanical properties", "includes", "Tensile strength"),
    ("mechanical properties", "is evaluated by", "adhesion"),
    ("mechanical properties", "includes", "friction coefficient"),
    ("mechanical properties", "correlated to", "microstructure"),
    ("High temperature heat treatment", "improves", "Biological durability"),
    ("High temperature heat treatment", "reduces", "mechanical properties"),
    ("temperature stability", "affects during Fade Test", "friction coefficient"),
    ("microstructure", "affects", "temperature stability"),
    ("microstructure", "affects", "mechanical properties"),
    ("microstructure", "affects", "friction coefficient"),
    ("microstructure", "affects", "Tensile strength"),
    ("adhesion", "affects", "mechanical properties"),
    ("adhesion", "affects", "friction coefficient"),
    ("Perovskite solar cells (PSC)", "lacksProperty", "temperature stability"),
    ("Perovskite solar cells (PSC)", "requires", "Manufacturing process"),
    ("friction coefficient", "changes to", "friction coefficient"),
    ("friction coefficient", "has a positive relationship with", "adhesion"),
    ("friction coefficient", "influenced by", "mechanical properties"),
    ("Manufacturing process", "involves", "High temperature heat treatment"),
]

# design keyword -> node it must resolve to
PROPERTY_KEYWORD_MAP = {
    "tensile strength at 20-30 MPa": "Tensile strength",
    "friction coefficient in range 0.1 to 0.3": "friction coefficient",
    "thermal stability in range 250-400°C": "temperature stability",
    "dimensional stability at temperatures below 300°C": "temperature stability",
    ("durability in biomedical tubing applications with exposure to "
     "sterilization processes and varying temperatures during medical "
     "procedures"): "Biological durability",
}

PROPERTY_KEYWORDS = list(PROPERTY_KEYWORD_MAP)

# shortest-path node sequences over all keyword pairs, in pair order
EXPECTED_PROPERTY_PATHS = [
    ("Tensile strength", "adhesion", "friction coefficient"),
    ("Tensile strength", "microstructure", "temperature stability"),
    ("Tensile strength", "microstructure", "temperature stability"),
    ("Tensile strength", "mechanical properties", "High temperature heat treatment",
     "Biological durability"),
    ("friction coefficient", "temperature stability"),
    ("friction coefficient", "temperature stability"),
    ("friction coefficient", "mechanical properties",
     "High temperature heat treatment", "Biological durability"),
    ("temperature stability",),
    ("temperature stability", "Perovskite solar cells (PSC)",
     "Manufacturing process", "High temperature heat treatment",
     "Biological durability"),
    ("temperature stability", "Perovskite solar cells (PSC)",
     "Manufacturing process", "High temperature heat treatment",
     "Biological durability"),
]

# ----------------------------------------------------------------------
# silk-focused graph (64 relationship sentences, 31 nodes)

SILK_TRIPLES = [
    ("Eutectogels", "exhibits", "biocompatibility"),
    ("Eutectogels", "reinforced_with", "silk fibroin"),
    ("tribological behavior", "includes", "friction coefficient"),
    ("tribological behavior", "influenced by", "surface chemistry"),
    ("nanocomposite membranes", "has_property", "surface chemistry"),
    ("pH", "affects activity of", "alpha-amylase"),
    ("pH", "affects", "hydrogen bonding"),
    ("pH", "affects", "ionic strength"),
    ("pH", "affects conformation of", "silk fibroin"),
    ("pH", "affects", "adhesion"),
    ("pH", "affects", "friction coefficient"),
    ("silk fibroin", "enables", "hydrogen bonding"),
    ("silk fibroin", "component of", "nanocomposite membranes"),
    ("silk fibroin", "component of", "Silk fibroin-based bentonite composite"),
    ("silk fibroin", "contains", "nitrogen"),
    ("surface energy", "affects", "biocompatibility"),
    ("surface energy", "affects", "hydrophobicity"),
    ("surface energy", "increases", "adhesion"),
    ("surface energy", "affects", "friction coefficient"),
    ("friction coefficient", "changes to", "friction coefficient"),
    ("friction coefficient", "has a positive relationship with", "adhesion"),
    ("friction coefficient", "independent of", "surface energy"),
    ("friction coefficient", "depends_on", "pH"),
    ("friction coefficient", "is a part of", "tribological behavior"),
    ("surface chemistry", "includes", "surface energy"),
    ("surface chemistry", "influences", "biocompatibility"),
    ("surface chemistry", "affects", "hydrophobicity"),
    ("surface chemistry", "includes", "friction coefficient"),
    ("covalent bonds", "forms strong", "adhesion"),
    ("Imidazolium", "improves", "efficient packing"),
    ("Imidazolium", "type of cation", "Ionic liquid"),
    ("hydrogen bonding", "increases", "adhesion"),
    ("hydrogen bonding", "enhances dimensional stability of", "Polyimides"),
    ("alpha-amylase", "affected by", "pH"),
    ("HSPC", "affected by", "cryopreservation techniques"),
    ("HSPC", "affected by", "reagents"),
    ("X-ray diffraction", "confirmed by", "tetragonal structure"),
    ("X-ray diffraction", "characterizes", "Silk fibroin-based bentonite composite"),
    ("nitrogen", "affects", "friction coefficient"),
    ("ionic strength", "affects", "adhesion"),
    ("ionic strength", "affects adsorption of", "silk fibroin"),
    ("fluorine-containing polyimide", "is a type of", "Polyimides"),
    ("fluorine-containing polyimide", "stable in", "nitrogen"),
    ("fluorine-containing polyimide", "characterized by", "X-ray diffraction"),
    ("fluorine-containing polyimide", "characterized by", "Viscosity Measurements"),
    ("fluorine-containing polyimide", "affects", "biocompatibility"),
    ("Scanning electron microscopy", "shows hydrolytic degradation of",
     "Polyurethanes (PUs)"),
    ("Scanning electron microscopy", "characterizes morphology of",
     "Silk fibroin-based bentonite composite"),
    ("Scanning electron microscopy", "used to analyze", "tribological behavior"),
    ("reagents", "affects activity of", "alpha-amylase"),
    ("hydrophobicity", "influences", "adhesion"),
    ("hydrophobicity", "increases with increased hydrophobicity",
     "friction coefficient"),
    ("hydrophobicity", "affected by", "pH"),
    ("Polyimides", "tested in", "nitrogen"),
    ("Polyimides", "possess", "adhesion"),
    ("Polyimides", "has property", "high-temperature resistance"),
    ("Ionic liquid", "is a replacement for", "reagents"),
    ("Ionic liquid", "possess", "hydrogen bonding"),
    ("Ionic liquid", "consists of", "Imidazolium"),
    ("Ionic liquid", "reduces", "friction coefficient"),
    ("Polyurethanes (PUs)", "is cross-linked with", "silk fibroin"),
    ("adhesion", "is improved without", "covalent bonds"),
    ("adhesion", "determined by", "ionic strength"),
    ("adhesion", "affects", "friction coefficient"),
]

SILK_KEYWORD_MAP = {
    "chemical resistance at value of high degree": "high-temperature resistance",
    "low friction coefficient in range of 0.03 to 0.091": "friction coefficient",
    "thermal stability at value of high temperature resistance":
        "high-temperature resistance",
    "hydrophobicity at value of low surface energy": "hydrophobicity",
    "non-adhesive behavior at value of effortless sliding": "adhesion",
    "molecular structure at value of tetrahedral arrangement":
        "tetragonal structure",
    "tribological performance at value of reduced wear and friction":
        "tribological behavior",
    "surface energy at value of low energy": "surface energy",
    "adhesive bonds at value of reduced bonds": "covalent bonds",
    "sample flow at value of smooth flow": "Viscosity Measurements",
    "handling at value of easy handling": "efficient packing",
    "sterilization methods at value of resistant to sterilization":
        "cryopreservation techniques",
    "biocompatibility at value of compatible with biological samples":
        "biocompatibility",
}

SILK_KEYWORDS = list(SILK_KEYWORD_MAP)
SILK_STOP_KEYWORD = "silk"
SILK_STOP_NODE = "silk fibroin"


# ----------------------------------------------------------------------
# builders


class AliasEmbedder:
    """Deterministic embedder that first maps chosen strings to node labels.

    Aliased queries land exactly on their target label's vector, so
    nearest-node lookups resolve them with similarity 1.0.
    """

    def __init__(self, aliases: dict[str, str] | None = None,
                 dim: int = 64, seed: int = 0):
        self.aliases = dict(aliases or {})
        self._inner = DeterministicEmbedder(dim=dim, seed=seed)
        self.dim = dim

    def embed(self, texts):
        return self._inner.embed([self.aliases.get(t, t) for t in texts])


def property_embedder(seed: int = 0) -> AliasEmbedder:
    aliases = dict(PROPERTY_KEYWORD_MAP)
    return AliasEmbedder(aliases, seed=seed)


def silk_embedder(seed: int = 0) -> AliasEmbedder:
    aliases = dict(SILK_KEYWORD_MAP)
    aliases[SILK_STOP_KEYWORD] = SILK_STOP_NODE
    return AliasEmbedder(aliases, seed=seed)


def _graph_from(name: str, triples, chunk_prefix: str,
                triples_per_chunk: int = 7) -> KnowledgeGraph:
    graph = KnowledgeGraph(name=name)
    for i, (source, relation, target) in enumerate(triples):
        chunk_id = f"{chunk_prefix}::{i // triples_per_chunk:04d}"
        graph.add_triple(source, relation, target, chunk_id)
    return graph


def build_property_graph() -> KnowledgeGraph:
    return _graph_from("properties", PROPERTY_TRIPLES, "props")


def build_silk_graph() -> KnowledgeGraph:
    return _graph_from("silk", SILK_TRIPLES, "silk")


def build_index(graph: KnowledgeGraph, embedder) -> EmbeddingIndex:
    index = EmbeddingIndex()
    labels = graph.node_ids()
    for label, vec in zip(labels, embedder.embed(labels)):
        index.add(label, vec)
    return index


def property_chunk_texts() -> dict[str, str]:
    """One prose paragraph per provenance chunk of the properties graph."""
    texts: dict[str, str] = {}
    for i, (source, relation, target) in enumerate(PROPERTY_TRIPLES):
        chunk_id = f"props::{i // 7:04d}"
        sentence = f"{source} {relation} {target}."
        texts[chunk_id] = (texts.get(chunk_id, "") + " " + sentence).strip()
    return texts


def build_property_store(embedder) -> ChunkStore:
    store = ChunkStore()
    for chunk_id, text in property_chunk_texts().items():
        store.add(Chunk(chunk_id, "props", None, text, token_estimate(text)))
    store.embed_all(embedder)
    return store


# ----------------------------------------------------------------------
# scripted agent replies

PLANNER_RESPONSE = """\
To understand how PFAS enables its application in biomedical tubing, let's \
break down the inquiry into specific design sub-questions focusing on \
intrinsic material properties. Here are three simple design sub-questions:

1. What is the tensile strength of PFAS that allows it to maintain structural integrity under various pressure conditions within biomedical tubing applications?

2. How does the low friction coefficient of PFAS contribute to its use in biomedical tubing, particularly in terms of reducing occlusions and improving flow rates?

3. What is the thermal stability range of PFAS that ensures its dimensional stability and durability when exposed to sterilization processes or varying temperatures during medical procedures?

KEYWORDS: tensile strength, friction coefficient, thermal stability, biomedical tubing, sterilization resistance, chemical inertness, biocompatibility, non-toxicity, flexibility, kinking resistance.

SYNONYMS: mechanical properties, surface energy, temperature range, medical devices, implantable devices, perfluorinated compounds, fluoropolymers.
"""

HYBRID_ANSWERS = [
    "Tubing walls must hold their shape under pumping pressure, which points "
    "at tensile strength in the low tens of MPa. The retrieved notes tie "
    "tensile strength to overall mechanical properties and to adhesion "
    "behaviour [chunk:props::0000], so a figure of 20-30 MPa is a reasonable "
    "working window for thin-walled lines.",
    "A low friction coefficient keeps fluids and guidewires moving without "
    "snagging. The graph links friction coefficient to adhesion and to the "
    "bulk mechanical properties [chunk:props::0002], and values between 0.1 "
    "and 0.3 are consistent with smooth occlusion-free flow.",
    "Sterilization cycles push the material toward its thermal limits, so "
    "thermal stability in the 250-400°C range with dimensional "
    "stability below 300°C matters most. Temperature stability also "
    "feeds back into friction behaviour during heating "
    "[chunk:props::0001], which is why durability under repeated "
    "sterilization belongs on the requirement list.",
]

EVALUATOR_RESPONSE = (
    "tensile strength at 20-30 MPa; friction coefficient in range 0.1 to 0.3; "
    "thermal stability in range 250-400°C; dimensional stability at "
    "temperatures below 300°C; durability in biomedical tubing "
    "applications with exposure to sterilization processes and varying "
    "temperatures during medical procedures."
)

ENGINEER_RESPONSE = """\
Hypothesis:
A PFAS liner given a short high temperature heat treatment after extrusion will keep its low friction surface while gaining measurably better biological durability, because the treatment trades a small amount of bulk strength for a more stable microstructure.

Justification:
The reasoning paths connect tensile strength to friction through adhesion, and connect both to durability through the heat treatment step. Since microstructure drives temperature stability and friction at once, a controlled anneal should shift the balance toward sterilization tolerance without pushing friction out of the 0.1 to 0.3 window.

Expected Material Properties for Experimental Evaluation:
Tensile strength between 20 and 30 MPa before and after treatment; friction coefficient held in the 0.1 to 0.3 range; dimensional stability through repeated cycles below 300°C; no loss of wall integrity after standard sterilization protocols.

Foreseeable Implementation Challenges:
The same treatment that improves durability reduces mechanical properties, so over-annealing risks kink failure in thin walls. Process control on tubing lines is harder than on flat stock, and verifying microstructure changes nondestructively will need method development.

Knowledge Graph Reasoning Path(s) Used:
Tensile strength implies good adhesion. adhesion affects friction coefficient. friction coefficient influenced by mechanical properties. High temperature heat treatment reduces mechanical properties. High temperature heat treatment improves Biological durability. temperature stability affects during Fade Test friction coefficient.
"""

PIPELINE_SCRIPT = [
    PLANNER_RESPONSE,
    HYBRID_ANSWERS[0],
    HYBRID_ANSWERS[1],
    HYBRID_ANSWERS[2],
    EVALUATOR_RESPONSE,
    ENGINEER_RESPONSE,
]


def ablation_llm_script() -> list[str]:
    """LLM replies for the five stage-subset runs, in execution order."""
    return [
        # every stage on
        PLANNER_RESPONSE, *HYBRID_ANSWERS, EVALUATOR_RESPONSE, ENGINEER_RESPONSE,
        # planner + hybrid + engineer
        PLANNER_RESPONSE, *HYBRID_ANSWERS, ENGINEER_RESPONSE,
        # hybrid + evaluator + creative + engineer
        HYBRID_ANSWERS[0], EVALUATOR_RESPONSE, ENGINEER_RESPONSE,
        # hybrid + engineer
        HYBRID_ANSWERS[0], ENGINEER_RESPONSE,
        # engineer alone
        ENGINEER_RESPONSE,
    ]


# judge scores per configuration, in rubric criterion order
JUDGE_ROWS = {
    "all_components": (9, 8, 5, 6, 7, 7),
    "expanded_retrieval": (8, 7, 6, 6, 7, 6),
    "direct_graph_exploration": (6, 7, 4, 4, 8, 6),
    "direct_retrieval": (5, 6, 3, 3, 7, 5),
    "llm_only": (4, 1, 2, 3, 7, 1),
}

EXPECTED_MEANS = {name: sum(row) / 6 for name, row in JUDGE_ROWS.items()}


def judge_script(criteria) -> list[str]:
    """One JSON judge reply per configuration, in configuration order."""
    replies = []
    for name, row in JUDGE_ROWS.items():
        payload = {
            criterion: {"score": score, "rationale": f"scripted note for {name}"}
            for criterion, score in zip(criteria, row)
        }
        replies.append(json.dumps(payload))
    return replies
