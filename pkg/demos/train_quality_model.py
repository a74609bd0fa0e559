"""Train a small unified quality regressor on a balanced mock benchmark.

One model scores both modalities: captions enter as image tokens followed by
caption tokens, interleaved documents keep their natural item order.  The
scalar head is trained with MSE against the 0..3 level and evaluated by
rounding to the nearest level.

Run: python3 demos/train_quality_model.py  (about half a minute on a laptop)
"""

import time

from unifilter.classifier import ModelConfig, TrainConfig, train, validation_accuracy
from unifilter.encoder import EncoderConfig
from unifilter.metrics import evaluate, format_report, quantize_score
from unifilter.synthgen import make_mock_benchmark

MODEL = ModelConfig(d=32, n_layers=1, n_heads=2, max_seq_len=192,
                    encoder=EncoderConfig(patch_size=4, d_v=16, t=4, d=32, seed=0))
TRAIN = TrainConfig(epochs=8, batch_size=8, peak_lr=2e-3)


def main():
    train_s, val_s = make_mock_benchmark(train_per_cell=25, val_per_cell=5, seed=11)
    print(f"benchmark: {len(train_s)} train / {len(val_s)} val, "
          f"4 levels x 2 modalities")

    t0 = time.monotonic()
    model, history = train(train_s, val_s, MODEL, TRAIN, seed=123)
    print(f"trained {TRAIN.epochs} epochs in {time.monotonic() - t0:.1f}s")
    print()

    print("epoch  train_loss  val_acc  val_f1")
    for h in history:
        print(f"{h['epoch']:5d}  {h['train_loss']:10.4f}  "
              f"{h['val_accuracy']:7.3f}  {h['val_macro_f1']:6.3f}")
    print()

    acc, macro_f1 = validation_accuracy(model, val_s)
    print(f"returned model (best epoch): acc {acc:.3f}, macro F1 {macro_f1:.3f}")
    print()

    pairs = [(s.label, quantize_score(model.score_record(s.record))) for s in val_s]
    print(format_report(evaluate(pairs)))

    print("a few raw scores against their labels:")
    for s in val_s[:6]:
        raw = model.score_record(s.record)
        kind = type(s.record).__name__
        print(f"  label {s.label} ({s.level_name:16s} {kind:15s}) -> {raw:+.3f}")


if __name__ == "__main__":
    main()
