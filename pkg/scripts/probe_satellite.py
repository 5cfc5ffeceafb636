"""Quick satellite-profile readout: F1 vs steps for the default net.

Sanity check for the transfer and filter-size step budgets.
"""

import json
import time

from fovea import data, model, pipeline, synth

LR = 5e-4
STEPS = 600
EVAL_AT = {150, 300, 450, 600}
FRAME_STEP = 4


def main():
    b = synth.make_benchmark("satellite", seed=0)
    dataset = data.build_dataset(b.train_seq, b.train_annotations, b.params)
    cfg = model.ModelConfig(filter_sizes=model.FILTER_SIZE_CONFIGS[9],
                            in_channels=b.params.channels, dropout_rate=0.0)
    net = model.build_model(cfg, seed=0)
    print(json.dumps({"tiles": len(dataset), "tile": b.params.tile,
                      "alpha": b.alpha, "theta": b.theta}), flush=True)

    start = time.time()

    def on_step(step, loss, snapshot):
        if step + 1 not in EVAL_AT:
            return
        rep = pipeline.evaluate(pipeline.predictor(snapshot), b.eval_seq,
                                b.eval_annotations, b.params, b.theta, b.alpha,
                                frame_step=FRAME_STEP)
        print(json.dumps({"step": step + 1, "loss": round(loss, 6),
                          "elapsed": round(time.time() - start, 1),
                          "p": round(rep.precision, 3), "r": round(rep.recall, 3),
                          "f1": round(rep.f1, 3), "fp": rep.fp, "fn": rep.fn}),
              flush=True)

    spec = model.TrainSpec(lr=LR, batch_size=8, max_steps=STEPS,
                           seed=1, heatmap_sigma=b.params.sigma)
    model.train(net, dataset, spec, on_step=on_step)


if __name__ == "__main__":
    main()
