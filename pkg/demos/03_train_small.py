"""Train a small model end to end on a reduced task (64x64 images, a few
minutes on a laptop), then look at its metrics and confusion matrix.

For the full-scale run used in the acceptance suite, see README; the
moving parts are identical, only sizes differ.
"""

import depthseg as ds
from depthseg.network import ModelConfig, count_parameters
from depthseg.training import TrainConfig
from depthseg.viz import plot_confusion

synth = ds.SynthesisConfig(
    n_samples=120, seed=0, image_shape=(64, 64),
    depth_cap=5, base_depth_range=(3, 5),
)
full = ds.synthesize_dataset(synth)
train_set = full.subset(range(80))
val_set = full.subset(range(80, 100))
test_set = full.subset(range(100, 120))

model_config = ModelConfig(base_channels=8, scales=4)
train_config = TrainConfig(lambda_=2.5, batch_size=8, max_epochs=15,
                           patience=6, lr_patience=2, seed=0,
                           n_train=80, n_val=20)
print(f"training {count_parameters(ds.build_model(model_config)) / 1e6:.2f}M parameters")

params, record = ds.train(train_config, model_config, train_set, val_set, verbose=True)
print(f"best epoch {record.best_epoch}, best val loss {record.best_val_loss:.1f}")

report = ds.evaluate_model(params, test_set, lambda_=2.5, seed=1)
print(f"pixelwise accuracy      {report.pixelwise_acc:.3f}")
print(f"center accuracy         {report.center_acc:.3f}")
print(f"real atom detection     {report.real_atom_detection_rate:.3f}")
print(f"hallucinated atom rate  {report.hallucinated_atom_rate:.4f}")

plot_confusion(report.confusion, "demo03_confusion.png")
print("wrote demo03_confusion.png")

ds.save_checkpoint(params, "demo03_checkpoint")
print("wrote demo03_checkpoint/")
