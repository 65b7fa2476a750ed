"""Walk through the data layer: generate a synthetic commit corpus, split it
chronologically, and compute the 14 hand-crafted metrics per commit.

Run:  python demos/01_corpus_and_features.py
"""

import numpy as np

from jitdp.corpus import SyntheticSpec, chronological_split, synthesize_corpus, undersample
from jitdp.features import FEATURE_NAMES, featurize_corpus

# A corpus with a strong feature signal (defective commits are large) and a
# weaker text signal. Equal seeds reproduce the corpus bit for bit.
spec = SyntheticSpec(size=300, imbalance=3.0, feature_strength=0.9,
                     text_strength=0.3, seed=7)
corpus = synthesize_corpus(spec)
defective = sum(c.label for c in corpus)
print(f"{len(corpus)} commits, {defective} defective / {len(corpus) - defective} clean")

one = corpus[42]
print(f"\nexample commit {one.commit_id} by {one.author}:")
print(f"  message: {one.message!r}")
print(f"  files: {[f.path for f in one.files]}")
print(f"  first added line: {one.files[0].added_lines[0]!r}")

# The 14 metrics are computed against a history index that only ever sees
# commits strictly earlier than the one being featurized.
vectors = featurize_corpus(corpus)
print(f"\n{'feature':>8}: value for {one.commit_id}")
vec = vectors[one.commit_id]
for name in FEATURE_NAMES:
    print(f"{name:>8}: {getattr(vec, name):.4g}")

# Chronological split (75/5/20 by default) never leaks the future into
# training; undersampling balances the training classes for the forest.
split = chronological_split(corpus)
labels = {c.commit_id: c.label for c in corpus}
balanced = undersample(split.train_ids, labels, seed=1)
n_pos = sum(labels[i] for i in balanced)
print(f"\nsplit sizes: train {len(split.train_ids)}, validation "
      f"{len(split.validation_ids)}, test {len(split.test_ids)}")
print(f"after undersampling: {len(balanced)} training commits, {n_pos} defective")
