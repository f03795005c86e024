#!/usr/bin/env python3
"""Train the small demo MLP and export its weights plus a held-out sample set.

Produces the fixture files under fixtures/mlp/: two dense layers (64 -> 32 ->
10) trained on the 8x8 scikit-learn digits, the first 200 held-out samples
(pixels scaled to [0, 1]), and their labels. Matrices follow the harness JSON
format {"rows", "cols", "data"} with row-major data and weights oriented as
outputs x inputs.
"""

import json
from pathlib import Path

import numpy as np
from sklearn.datasets import load_digits
from sklearn.model_selection import train_test_split
from sklearn.neural_network import MLPClassifier

OUT = Path(__file__).resolve().parent.parent / "fixtures" / "mlp"
SAMPLES = 200


def save_matrix(path: Path, m: np.ndarray) -> None:
    m = np.asarray(m, dtype=np.float64)
    payload = {"rows": m.shape[0], "cols": m.shape[1], "data": m.flatten().tolist()}
    path.write_text(json.dumps(payload) + "\n")


def main() -> None:
    OUT.mkdir(parents=True, exist_ok=True)
    digits = load_digits()
    x = digits.data / 16.0  # pixel values 0..16 -> [0, 1]
    y = digits.target

    x_train, x_test, y_train, y_test = train_test_split(
        x, y, test_size=0.25, random_state=7, stratify=y
    )

    clf = MLPClassifier(
        hidden_layer_sizes=(32,),
        activation="relu",
        max_iter=600,
        random_state=7,
    )
    clf.fit(x_train, y_train)

    x_fix = x_test[:SAMPLES]
    y_fix = y_test[:SAMPLES]
    acc = clf.score(x_fix, y_fix)
    print(f"fixture accuracy: {acc:.4f} over {len(y_fix)} samples")

    # sklearn stores coefs as inputs x outputs; the harness wants outputs x inputs
    w1 = clf.coefs_[0].T
    b1 = clf.intercepts_[0].reshape(1, -1)
    w2 = clf.coefs_[1].T
    b2 = clf.intercepts_[1].reshape(1, -1)

    save_matrix(OUT / "w1.json", w1)
    save_matrix(OUT / "b1.json", b1)
    save_matrix(OUT / "w2.json", w2)
    save_matrix(OUT / "b2.json", b2)
    save_matrix(OUT / "dataset.json", x_fix)
    (OUT / "labels.json").write_text(json.dumps(y_fix.tolist()) + "\n")

    network = {
        "schema_version": 1,
        "layers": [
            {"weights": "w1.json", "bias": "b1.json", "activation": "relu"},
            {"weights": "w2.json", "bias": "b2.json", "activation": "none"},
        ],
        "dataset": "dataset.json",
        "labels": "labels.json",
    }
    (OUT / "network.json").write_text(json.dumps(network, indent=2) + "\n")
    print(f"wrote fixtures to {OUT}")


if __name__ == "__main__":
    main()
