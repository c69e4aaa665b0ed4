"""Fit WER-vs-clarity curves on a synthetic oracle corpus.

Builds a corpus whose word error rates follow a known sigmoid of the true
C50 (plus label noise), then fits linear, cubic, and sigmoid mappings on
the training split and scores them on held-out test talkers and rooms.
The sigmoid should win, with the cubic close behind.

Run with: python demos/fit_wer_curves.py
"""

from revwer import air, corpus, fitting, metrics

C50 = air.PARAM_NAMES.index("c50")


def main():
    config = corpus.CorpusConfig(n_talkers=20, n_airs=60,
                                 utterances_per_talker=60, seed=0)
    records, _, _ = corpus.build_corpus(config)
    train = [r for r in records if r.split == "TR"]
    test = [r for r in records if r.split == "TE"]
    print(f"corpus: {len(records)} utterances "
          f"({len(train)} train, {len(test)} test)")

    usable = [r for r in test if r.acoustic_params.complete]
    raw_rho = metrics.pearson_abs(
        [r.acoustic_params.as_vector()[C50] for r in usable],
        [r.true_wer for r in usable],
    )
    print(f"\nraw C50 vs WER correlation on test: |rho| = {raw_rho:.3f}")

    print(f"\n{'model':>8s} {'TE |rho|':>9s} {'TE RMSE':>8s}")
    for kind in ("linear", "cubic", "sigmoid"):
        model, rho, err = fitting.fit_and_evaluate(train, test, C50, kind)
        print(f"{kind:>8s} {rho:9.3f} {err:8.3f}")
        if kind == "sigmoid":
            print(f"\nrecovered sigmoid: floor={model.q1:.3f} "
                  f"ceiling={model.q2:.3f} slope={model.q3:.3f} "
                  f"midpoint={model.q4:.2f} dB")
            print(f"planted oracle:    floor={corpus.DEFAULT_ORACLE_Q[0]} "
                  f"ceiling={corpus.DEFAULT_ORACLE_Q[1]} "
                  f"slope={corpus.DEFAULT_ORACLE_Q[2]} "
                  f"midpoint={corpus.DEFAULT_ORACLE_Q[3]} dB")


if __name__ == "__main__":
    main()
