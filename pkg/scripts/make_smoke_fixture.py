"""Regenerate the bundled 20-document smoke fixture.

Each document defines one distinctive two-word term, so the offline echo
generator produces a QA unit containing that term's query verbatim.
Half the documents also stuff their filler sentence with the next
document's term, which makes several queries misrank under
original-text-only retrieval while the QA-augmented store ranks every
query correctly. Run from the repo root:

    python3 scripts/make_smoke_fixture.py
"""

from __future__ import annotations

import json
from pathlib import Path

TERMS = [
    ("Zephyr catalyst", "a brass chamber that filters drifting mist"),
    ("Umbral lattice", "a woven frame that blocks stray light"),
    ("Quartz pendulum", "a swinging rod that keeps furnace time"),
    ("Velvet dynamo", "a cloth-wrapped coil that hums at dusk"),
    ("Cobalt sluice", "a narrow channel that guides molten dye"),
    ("Amber gyroscope", "a resin wheel that steadies the barge"),
    ("Ivory throttle", "a carved lever that meters the steam"),
    ("Crimson bellows", "a folded pump that feeds the forge"),
    ("Obsidian flywheel", "a glassy disc that stores spare motion"),
    ("Saffron capacitor", "a spice-tinted cell that holds charge"),
    ("Willow conduit", "a bending pipe that carries cold brine"),
    ("Granite piston", "a stone shaft that presses the pulp"),
    ("Lilac regulator", "a pale valve that trims the pressure"),
    ("Bronze astrolabe", "a ring device that charts the tides"),
    ("Maroon turbine", "a dark rotor that spins under rain"),
    ("Pewter siphon", "a dull tube that lifts settled oil"),
    ("Juniper gasket", "a scented seal that cushions the flange"),
    ("Scarlet manifold", "a branched casing that splits the flow"),
    ("Walnut camshaft", "a wooden spindle that times the stamps"),
    ("Indigo rectifier", "a deep-blue grid that tames the arc"),
]

FILLERS = [
    "Crews log gauge readings beside the depot racks every evening shift.",
    "Inspectors chalk worn housings and tag loose fittings for repair.",
    "The yard ledger records spare couplings, rivets, and surplus crates.",
    "Night watchers oil the walkway hinges and sweep the loading ramps.",
]


def build_rows() -> tuple[list[dict], list[dict], list[dict]]:
    corpus, queries, qrels = [], [], []
    for i, (term, definition) in enumerate(TERMS):
        doc_id = f"d{i:02d}"
        query_id = f"q{i:02d}"
        sentences = [f"{term} is {definition}."]
        if i % 2 == 0:
            # stuff the next term so original-only retrieval misranks it
            next_term = TERMS[(i + 1) % len(TERMS)][0].lower()
            sentences.append(
                f"Handlers flag the {next_term} housing, re-check the {next_term} "
                f"mounts, and stow {next_term} spares near the gantry."
            )
        sentences.append(FILLERS[i % len(FILLERS)])
        corpus.append({"doc_id": doc_id, "text": " ".join(sentences)})
        queries.append({"query_id": query_id, "text": f"What is {term}?"})
        qrels.append({"query_id": query_id, "doc_id": doc_id, "relevance": 1})
    return corpus, queries, qrels


def main() -> None:
    out_dir = Path(__file__).resolve().parent.parent / "tests" / "data" / "smoke"
    out_dir.mkdir(parents=True, exist_ok=True)
    corpus, queries, qrels = build_rows()
    for name, rows in [("corpus", corpus), ("queries", queries), ("qrels", qrels)]:
        path = out_dir / f"{name}.jsonl"
        with path.open("w", encoding="utf-8") as f:
            for row in rows:
                f.write(json.dumps(row, ensure_ascii=False, sort_keys=True) + "\n")
        print(f"wrote {path} ({len(rows)} rows)")


if __name__ == "__main__":
    main()
