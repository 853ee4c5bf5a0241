"""Train the feature embedding, then export analysis artifacts.

The embedding is a two-layer net trained episodically on base classes
with a dual objective: classify queries against episode prototypes and,
through an auxiliary head that is thrown away afterwards, against all
base classes at once.  Afterwards we export the numbers behind the two
standard diagnostic figures: per-class distance contraction and a 2-D
projection of novel-class geometry.

CLI equivalent:
  protorestore train-embed --bank synth.fbank --out embed.dnw1
  protorestore embed --bank synth.fbank --model embed.dnw1 --out emb.fbank
  protorestore stats --bank synth.fbank --model restore.dnw1
  protorestore project --bank synth.fbank --model restore.dnw1 --out proj.csv
"""

from pathlib import Path

from protorestore.embedtrain import (DualLossConfig, EpisodeSpec,
                                     apply_embedding, train_embedding)
from protorestore.evalharness import (EvalConfig, distance_stats,
                                      emit_projection, projection_extras,
                                      run_eval)
from protorestore.featstore import view_split
from protorestore.neural import TrainConfig
from protorestore.restore import collect_pairs, compute_targets, train_restore
from protorestore.synthgen import SynthSpec, generate

out = Path("out")
out.mkdir(exist_ok=True)

bank, _ = generate(SynthSpec(seed=1))
base = view_split(bank, "base")
novel = view_split(bank, "novel")

# ---- episodic embedding training ----------------------------------------
result = train_embedding(base, EpisodeSpec(5, 1, 10), DualLossConfig(),
                         TrainConfig(seed=1, epochs=10),
                         episodes_per_epoch=100)
print(f"epoch mean loss: {result.epoch_means[0]:.3f} -> "
      f"{result.epoch_means[-1]:.3f}")

cfg = EvalConfig(spec=EpisodeSpec(5, 1, 30), n_episodes=500, seed=1)
raw = run_eval(novel, cfg)
emb = run_eval(apply_embedding(result.embed, novel), cfg)
print(f"novel 5-way 1-shot: raw features {raw.summary()}, "
      f"embedded {emb.summary()}")

# ---- distance contraction table ------------------------------------------
model = train_restore(collect_pairs(base, compute_targets(base), 60),
                      train=TrainConfig(seed=1))
stats = distance_stats(novel, model)
print(f"mean distance to class center: raw {stats.mean_raw:.2f}, "
      f"mapped {stats.mean_transformed:.2f}, "
      f"restored {stats.mean_restored:.2f}")
path = out / "contraction.csv"
path.write_text(stats.to_text(), encoding="utf-8")
print(f"per-class table -> {path}")

# ---- 2-D projection of prototypes vs centers ------------------------------
# plot points: every novel record, plus per class a sampled one-shot
# prototype, its restored version, and the class centroid
proj = emit_projection(novel, projection_extras(novel, model, seed=1),
                       out / "projection.csv")
print(f"plot data -> {proj} (columns x,y,class_id,tag)")
