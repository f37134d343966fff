"""
Evading a packet-level anomaly detector
=======================================

Train an autoencoder surrogate on benign traffic, mutate the flagged burst
packets by delaying them and padding the flow with redundant packets, and
check how the mutated capture fares against an independently trained target
and against two feature-level defences.
"""

from collections import Counter

from advnids.attack import AttackConfig, recurse_attack
from advnids.defences import FeatureSqueezer, fit_magnet
from advnids.detectors import fit_surrogate, make_detector
from advnids.evaluation import compute_evasion, compute_search_quality, detection_counts, format_evasion_table
from advnids.features import ExtractorState
from advnids.synthetic import CorpusConfig, generate_corpus

benign, malicious = generate_corpus(CorpusConfig())
warm = ExtractorState()
Xb = warm.extract_all(benign)
Xm = warm.clone().extract_all(malicious)

surrogate = fit_surrogate(Xb, seed=0)
target = make_detector("som", seed=99).fit(Xb)
print(f"surrogate flags {surrogate.classify(Xm).mean():.0%} of the burst")

# %%
# The attack streams the burst, and each flagged packet gets its own
# 20-particle search over (delay, redundant count, redundant size).
report = recurse_attack(malicious, surrogate, warm, AttackConfig())
print(report.summary())
adv = report.adversarial
Xa = warm.clone().extract_all(adv)

# %%
# Every original payload survives; only timing and padding change.
lost = Counter(p.payload for p in malicious) - Counter(p.payload for p in adv)
print(f"{len(adv)} packets emitted, original payloads missing: {sum(lost.values())}")

rows = [("burst", name, compute_evasion(detection_counts(det, Xb, Xm, Xa)))
        for name, det in (("surrogate", surrogate), ("som", target))]
print(format_evasion_table(rows))

sq = compute_search_quality(report.final.packets, surrogate.threshold)
print(f"search quality: RP={sq.RP:.3f} PI={sq.PI:.2f} PC={sq.PC:.2f}")

# %%
# Feature Squeezing is calibrated to stay silent on benign traffic.  The
# mutated traffic looks like benign traffic to it as well.
fs = FeatureSqueezer().calibrate(surrogate, Xb)
for name, X in (("benign", Xb), ("malicious", Xm), ("adversarial", Xa)):
    print(f"FS adversarial alerts on {name:>11}: {fs.detect(surrogate, X).adversarial.mean():.3f}")

# Mag-Net's reformer pulls everything toward the benign manifold, which
# also erases what made the malicious rows stand out.
mn = fit_magnet(surrogate, Xb, seed=1)
v = mn.detect(surrogate, Xm)
print(f"Mag-Net: {v.adversarial.mean():.3f} flagged adversarial, "
      f"{v.malicious.mean():.3f} still called malicious after reform")
