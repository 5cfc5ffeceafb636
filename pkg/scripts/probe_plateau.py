"""F1-vs-steps probe for the c=5 benchmark arm.

Prints one JSON line per eval point; used to pin the step budgets in
run_experiments.py against the single-core wall clock.
"""

import json
import time

import numpy as np

from fovea import data, model, pipeline, synth

LR = 1e-3
STEPS = 1050
EVAL_AT = {200, 350, 500, 650, 800, 950, 1050}
ALPHAS = (8.0,)
FRAME_STEP = 4
GOOD_ENOUGH = 0.82


class _Done(Exception):
    pass


def movers_per_frame(annotations, omega, frames):
    moving, _ = data.moving_filter(annotations, omega)
    per = {}
    for a in moving:
        per[a.frame_id] = per.get(a.frame_id, 0) + 1
    return [per.get(t, 0) for t in frames]


def sweep(net, b):
    predict = pipeline.predictor(net)
    out = {}
    for a in ALPHAS:
        rep = pipeline.evaluate(predict, b.eval_seq, b.eval_annotations,
                                b.params, b.theta, a, frame_step=FRAME_STEP)
        out[f"a{a:g}"] = {"p": round(rep.precision, 3), "r": round(rep.recall, 3),
                          "f1": round(rep.f1, 3), "fp": rep.fp, "fn": rep.fn}
    return out


def main():
    b = synth.make_benchmark("wami_sf02", seed=0)
    dataset = data.build_dataset(b.train_seq, b.train_annotations, b.params)
    n_train = b.train_seq.frames.shape[0]
    dens = movers_per_frame(b.train_annotations, b.params.omega,
                            (5, n_train // 2, n_train - 6))
    print(json.dumps({"tiles": len(dataset), "lr": LR,
                      "movers_early_mid_late": dens}), flush=True)

    cfg = model.ModelConfig(filter_sizes=model.FILTER_SIZE_CONFIGS[9],
                            in_channels=b.params.channels, dropout_rate=0.0)
    net = model.build_model(cfg, seed=0)
    start = time.time()

    def on_step(step, loss, snapshot):
        if step + 1 not in EVAL_AT:
            return
        row = {"step": step + 1, "loss": round(loss, 6),
               "train_elapsed": round(time.time() - start, 1)}
        row.update(sweep(snapshot, b))
        print(json.dumps(row), flush=True)
        if max(row[f"a{a:g}"]["f1"] for a in ALPHAS) >= GOOD_ENOUGH:
            raise _Done

    spec = model.TrainSpec(lr=LR, batch_size=4, max_steps=STEPS,
                           seed=1, heatmap_sigma=b.params.sigma)
    try:
        model.train(net, dataset, spec, on_step=on_step)
    except _Done:
        print(json.dumps({"early_stop": True}), flush=True)


if __name__ == "__main__":
    main()
