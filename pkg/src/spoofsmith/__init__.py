"""spoofsmith: a presentation-attack-detection toolkit.

Trains a DCGAN to synthesize attack images from a small real set, trains
a VGG-style sigmoid-head classifier to separate bona fide from synthetic,
and evaluates with accuracy/ROC/AUC, all on a self-contained numpy-backed
autodiff engine.
"""

from .tensor import Tensor, backward, no_grad
from .models import (NetworkSpec, build_dcgan_discriminator,
                     build_dcgan_generator, build_modified_vggnet, forward)
from .train import (AdamState, SplitConfig, TrainConfig, adam_step, augment,
                    split_dataset, synthesize, train_classifier, train_gan)
from .data import (DatasetManifest, ManifestEntry, decode_image, encode_image,
                   gen_toy_corpus, load_checkpoint, load_manifest,
                   save_checkpoint)
from .metrics import (EvalReport, ScoredSet, auc, confusion, emit_report,
                      evaluate_scores, roc_curve)

__version__ = "0.1.0"

__all__ = [
    "Tensor", "backward", "no_grad",
    "NetworkSpec", "build_dcgan_discriminator", "build_dcgan_generator",
    "build_modified_vggnet", "forward",
    "AdamState", "SplitConfig", "TrainConfig", "adam_step", "augment",
    "split_dataset", "synthesize", "train_classifier", "train_gan",
    "DatasetManifest", "ManifestEntry", "decode_image", "encode_image",
    "gen_toy_corpus", "load_checkpoint", "load_manifest", "save_checkpoint",
    "EvalReport", "ScoredSet", "auc", "confusion", "emit_report",
    "evaluate_scores", "roc_curve",
]
