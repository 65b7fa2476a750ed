"""The full fusion experiment through the pipeline: train the forest, the
deep model, and four early-fused variants, sweep all 20 early/late fusion
combinations on validation AUC-PR, and evaluate the chosen bundle.

Run:  python demos/04_fusion_sweep.py   (about a minute)
"""

import json
import tempfile
from pathlib import Path

from jitdp.corpus import SyntheticSpec, save_commit_stream, synthesize_corpus
from jitdp.pipeline import RunConfig, run_pipeline

workdir = Path(tempfile.mkdtemp(prefix="jitdp_demo_"))
corpus_path = workdir / "corpus.jsonl"
save_commit_stream(corpus_path, synthesize_corpus(
    SyntheticSpec(size=1200, feature_strength=0.5, text_strength=0.5, seed=11)))

config = RunConfig(corpus=str(corpus_path), out=str(workdir / "run"), seed=5,
                   epochs=8)
out = run_pipeline(config)

print(f"artifacts in {out}\n")
print("sweep log (validation AUC-PR per combination):")
print((out / "sweep_log.csv").read_text())

bundle = json.loads((out / "bundle.json").read_text())
print(f"chosen combination: early={bundle['early']} late={bundle['late']} "
      f"weights={bundle['weights']}")

reports = json.loads((out / "metrics.json").read_text())["reports"]
print("\ntest set results:")
for name in ("sim", "com", "bundle"):
    r = reports[name]
    print(f"  {name:>6}: AUC-ROC {r['auc_roc']:.3f}  AUC-PR {r['auc_pr']:.3f}  "
          f"F1 {r['f1']:.3f}")

analysis = json.loads((out / "metrics.json").read_text())["analysis"]
overlap = analysis["overlap_sim_vs_com"]
print(f"\nprediction overlap: {overlap['common_tp']} common true positives, "
      f"{overlap['unique_tp_a']} unique to the forest, "
      f"{overlap['unique_tp_b']} unique to the deep model")
corr = analysis["correction_bundle_vs_sim"]
print(f"bundle vs forest: {corr['wrong_to_correct']} corrected, "
      f"{corr['correct_to_wrong']} spoiled "
      f"(net ratio {corr['net_correction_ratio']:.1%})")
