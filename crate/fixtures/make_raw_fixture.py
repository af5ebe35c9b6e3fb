"""Writes the raw drug-screen bundle, its flat mapping, and an LLM replay file."""
import json
import os
import struct

HERE = os.path.dirname(os.path.abspath(__file__))
OUT = os.path.join(HERE, "raw_drug_screen")

DRUGS = ["DMSO", "drugA", "drugB", "DMSO", "drugA+drugB", "drugA", "drugB", "DMSO", "drugA+drugB", "drugA"]
CONC = ["0", "10", "2.5", "0", "1", "10", "2.5", "0", "1", "10"]
CELLS = ["K562"] * 5 + ["A549"] * 5
GENES = [("ENSG00000141510", "TP53"), ("ENSG00000133703", "KRAS"),
         ("ENSG00000146648", "EGFR"), ("ENSG00000136997", "MYC")]
X = [
    [3, 0, 7, 2], [1, 1, 1, 9], [0, 4, 0, 3], [5, 5, 0, 1], [2, 4, 6, 8],
    [0, 2, 2, 7], [6, 0, 1, 0], [4, 3, 5, 2], [1, 0, 9, 4], [2, 2, 2, 6],
]


def write_bundle():
    os.makedirs(OUT, exist_ok=True)
    manifest = {
        "format": "scpilot-bundle", "version": 1, "kind": "raw",
        "n_cells": len(DRUGS), "n_genes": len(GENES), "P": 0,
        "flags": {"is_log1p": False}, "pert_vocab": [],
        "obs_types": {"drug_id": "categorical", "conc_um": "string", "cell_type_annotation": "categorical"},
    }
    with open(os.path.join(OUT, "manifest.json"), "w") as f:
        f.write(json.dumps(manifest, indent=2) + "\n")
    with open(os.path.join(OUT, "obs.tsv"), "w") as f:
        f.write("drug_id\tconc_um\tcell_type_annotation\n")
        for row in zip(DRUGS, CONC, CELLS):
            f.write("\t".join(row) + "\n")
    with open(os.path.join(OUT, "var.tsv"), "w") as f:
        f.write("index\tsymbol\n")
        for ens, sym in GENES:
            f.write(f"{ens}\t{sym}\n")
    with open(os.path.join(OUT, "X.f64"), "wb") as f:
        for row in X:
            f.write(struct.pack("<%dd" % len(row), *map(float, row)))


FLAT = {
    "perturbation_type": "drug",
    "perturbation_name": {"type": "direct", "source_key": "drug_id"},
    "dose_value": {"type": "logic", "expression": "df['conc_um'].astype(float) * 1000",
                   "description": "micromolar to nanomolar"},
    "cell_line": {"type": "direct", "source_key": "cell_type_annotation"},
    "control_status": {"type": "logic", "expression": "df['drug_id'] == 'DMSO'"},
}

NESTED = {
    "uscp_mapping": {
        "obs": {
            "cell_type": "unknown", "batch_id": "None", "cell_line": "cell_type_annotation",
            "pert_type": "drug",
            "is_control_logic": "adata.obs['drug_id'] == 'DMSO'",
            "condition_name_logic": "None",
        },
        "obsm": {"pert_mask_source": "drug_id",
                 "pert_dose_source": {"type": "logic", "expression": "df['conc_um'].astype(float) * 1000"}},
        "var": {"index_type": "Ensembl ID", "gene_symbol_col": "symbol"},
        "numerical": {"is_already_log1p": False, "normalization_required": True, "target_sum": 10000.0},
    },
    "data_summary": "Small compound screen in two cell lines; DMSO wells are vehicle controls.",
}


def main():
    write_bundle()
    with open(os.path.join(HERE, "listing_mapping.json"), "w") as f:
        f.write(json.dumps(FLAT, indent=2) + "\n")
    reply = "Here is the mapping.\n\n```json\n" + json.dumps(NESTED, indent=2) + "\n```\n"
    with open(os.path.join(HERE, "replay_drug_screen.json"), "w") as f:
        f.write(json.dumps([reply], indent=2) + "\n")


if __name__ == "__main__":
    main()
