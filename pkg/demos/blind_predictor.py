"""Train the blind WER predictor on reverberant audio alone.

Builds a small audio corpus (synthetic speech convolved with synthetic
room responses), extracts log-mel feature blocks, and trains the
CNN-LSTM for a few epochs. With no access to the impulse responses or
clean speech, the network still learns to rank utterances by their word
error rate. This is a fast, scaled-down run; expect a modest correlation
that improves with more epochs and a larger corpus.

Run with: python demos/blind_predictor.py  (takes a few minutes)
"""

from revwer import corpus, predictors


def main():
    config = corpus.CorpusConfig(
        n_talkers=20, n_airs=30, utterances_per_talker=15,
        duration_s=2.0, with_audio=True, drr_range=(-8.0, 10.0), seed=4,
    )
    records, _, params = corpus.build_corpus(config)
    c50 = [p.c50 for p in params.values()]
    print(f"corpus: {len(records)} utterances, AIR C50 span "
          f"[{min(c50):.1f}, {max(c50):.1f}] dB")

    train = [r for r in records if r.split == "TR"]
    cv = [r for r in records if r.split == "CV"]
    test = [r for r in records if r.split == "TE"]
    print(f"splits: {len(train)} train / {len(cv)} cv / {len(test)} test")

    checkpoint = predictors.train_cnn_lstm(train, cv, epochs=15, seed=0,
                                           verbose=True)
    rho, err, rows = predictors.evaluate_predictor(checkpoint, test)
    print(f"\nheld-out: |rho| = {rho:.3f}, RMSE = {err:.3f}")
    print("\nsample predictions (true -> predicted):")
    for uid, truth, pred in rows[:8]:
        print(f"  {uid}: {truth:.3f} -> {pred:.3f}")


if __name__ == "__main__":
    main()
