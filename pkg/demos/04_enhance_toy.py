# coding: utf-8

# # Enhancing a noisy tone from scratch
#
# Train a tiny backbone on clean harmonic tones, train a noise model on a
# stretch of noise, then run guided sampling on a 5 dB mixture.  The backbone
# knows what clean signals look like; the noise model says how far the
# current estimate is from explaining the observation.  A few minutes on one
# core.

from pathlib import Path

import numpy as np

from noiseguide.audio import Wave, mix_at_snr, si_sdr, spectrogram_export, synth_corpus, write_wav
from noiseguide.diffusion import sample_unguided, train_backbone
from noiseguide.guided import enhance
from noiseguide.noise_model import train_noise_model
from noiseguide.numerics import make_rng
from noiseguide.schedules import guidance_scale, make_linear_beta

out = Path("demo_out")
out.mkdir(exist_ok=True)

sched = make_linear_beta(50, 1e-4, 0.05)
corpus = [w.samples for w in synth_corpus("harmonic", 64, 4096, seed=11)]
net, losses = train_backbone(corpus, sched, 150, 2e-3, make_rng(5), batch=8, segment=512)
print("backbone loss, first and last epoch:", losses[0], losses[-1])

# Unguided, the backbone dreams up a tone-like signal of its own.

dream = sample_unguided(net, sched, 2048, make_rng(1))

clean = synth_corpus("harmonic", 1, 2048, seed=2024)[0]
noise = Wave(make_rng(9).standard_normal(2048 + 4096))
noisy, scaled = mix_at_snr(clean, noise, 5.0)
gain = scaled.samples[0] / noise.samples[0]

nm = train_noise_model(noise.samples[2048:] * gain, sched, 60, 1e-2, make_rng(6))
x, run = enhance(noisy.samples, net, nm, sched, guidance_scale(sched, 0.72, 0.7), make_rng(7))

print("SI-SDR noisy   :", si_sdr(noisy.samples, clean.samples))
print("SI-SDR enhanced:", si_sdr(x, clean.samples))
print("SI-SDR unguided:", si_sdr(dream, clean.samples))

for name, sig in (("clean", clean.samples), ("noisy", noisy.samples), ("enhanced", np.clip(x, -1, 1))):
    write_wav(Wave(sig), out / f"{name}.wav")
    spectrogram_export(Wave(sig), out / f"spec_{name}")
run.write_csv(out / "enhance_diag.csv")
print("wrote WAVs, spectrograms and diagnostics to", out)
