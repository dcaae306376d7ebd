"""The full pipeline at demo scale: generate a toy bona-fide corpus,
train a small DCGAN on it, synthesize attack images, train the PAD
classifier on the mix, and report held-out accuracy and AUC.

Takes a minute or two on CPU. Run with:
    python3 demos/03_pad_pipeline.py
Artifacts land in ./demo_out/.
"""

import pathlib

from spoofsmith.data import DatasetManifest, ManifestEntry, gen_toy_corpus
from spoofsmith.models import (build_dcgan_discriminator,
                               build_dcgan_generator, build_modified_vggnet)
from spoofsmith.train import (SplitConfig, TrainConfig, synthesize,
                              train_classifier, train_gan)

out = pathlib.Path("demo_out")

print("1/4 generating 120 procedural bona-fide periocular images ...")
toy = gen_toy_corpus(120, 32, seed=0, out_dir=out / "toy")

print("2/4 adversarial training (DCGAN, 32px, width_scale 0.25) ...")
g = build_dcgan_generator(64, (3, 32, 32), width_scale=0.25, seed=0)
d = build_dcgan_discriminator((3, 32, 32), width_scale=0.25, seed=0)
gan = train_gan(toy, g, d, TrainConfig(epochs=10, real_per_iter=60, seed=0))
it, d_loss, g_loss = gan.history[-1]
print(f"    {gan.iterations} iterations, final d_loss={d_loss:.3f} "
      f"g_loss={g_loss:.3f}")

print("3/4 synthesizing 120 attack images ...")
synth = synthesize(g, 120, seed=1, out_dir=out / "synth")

print("4/4 training the PAD classifier (10 epochs) ...")
entries = [ManifestEntry(path=toy.resolve(e), label=e.label) for e in toy]
entries += [ManifestEntry(path=synth.resolve(e), label=e.label) for e in synth]
labeled = DatasetManifest(entries)
net = build_modified_vggnet((3, 32, 32), width_scale=0.25, head_units=32,
                            seed=0)
result = train_classifier(labeled, net,
                          TrainConfig.classifier(epochs=10, seed=0),
                          SplitConfig(0.8, seed=0))
for epoch, train_loss, test_acc in result.history:
    print(f"    epoch {epoch}: train_loss={train_loss:.4f} "
          f"test_acc={test_acc:.3f}")

r = result.report
print(f"\nheld-out ({len(result.test_manifest)} images): "
      f"accuracy={r.accuracy:.3f} auc={r.auc:.3f} "
      f"tpr={r.tpr:.3f} fpr={r.fpr:.3f}")
