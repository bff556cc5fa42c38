# coding: utf-8

# # Overfitting eight synthetic images
#
# A sanity run for the whole network: generate a small synthetic dataset,
# train the tiny preset until it memorises it, then run inference and score
# the maps. Takes about two minutes on one CPU core.

import json
import tempfile
from pathlib import Path

from bscgnet.pipeline.evaluate import evaluate
from bscgnet.pipeline.infer import infer
from bscgnet.pipeline.synth import SyntheticSpec, synth_generate
from bscgnet.pipeline.train import TrainConfig, train

work = Path(tempfile.mkdtemp(prefix="bscgnet-demo-"))
data = synth_generate(SyntheticSpec(count=8, size=64, seed=0), work / "data")

# the same settings as overfit_tiny.json next to this script
raw = json.loads((Path(__file__).parent / "overfit_tiny.json").read_text())
raw.update(image_dir=str(data / "images"), mask_dir=str(data / "masks"), out_dir=str(work / "run"))
config = TrainConfig(**raw)

result = train(config)
for row in result.history[::25]:
    print(f"epoch {row['epoch']:>3}  loss {row['loss']:.4f}  mae {row['mae']:.4f}")


# # Inference and scoring
#
# Saliency maps are written as 8-bit PNGs, then compared with the masks.

infer(result.final_checkpoint, data / "images", work / "pred")
report = evaluate(work / "pred", data / "masks", work / "report")
print(json.dumps(report.summary()["means"], indent=2))
print("outputs in", work)


# # Parameter and FLOP budget
#
# The same table is available from the command line as `bscgnet summary`.

from bscgnet.summary import summary_table

print(summary_table(config.model, 64))
