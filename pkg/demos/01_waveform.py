"""Build a format-1 preamble and look at its hopping and spectrum."""

import numpy as np

from nprach.waveform import FORMATS, PreambleConfig, build_numerology, generate_hopping, generate_waveform

fmt = FORMATS[1]
nm = build_numerology(fmt)
print(f"format 1 at {nm.fs / 1e6:.2f} MHz: N={nm.N}, CP={nm.N_cp}, symbol group={nm.N_g} samples")

cfg = PreambleConfig(fmt, n_rep=4, start_subcarrier=17, hopping_seed=5)
hop = generate_hopping(cfg)
print("subcarrier per symbol group:", hop.n_sc.tolist())
print("hopping steps:", hop.deltas.tolist())

x = generate_waveform(cfg, hop, nm)
print(f"{x.size} samples, {x.size / nm.fs * 1e3:.2f} ms, constant envelope: {np.allclose(np.abs(x), 1)}")

# each symbol after the CP is one tone; the FFT peak sits on the hopped subcarrier
for g in range(4):
    sym = x[g * nm.N_g + nm.N_cp : g * nm.N_g + nm.N_cp + nm.N]
    print(f"group {g}: FFT peak at bin {int(np.argmax(np.abs(np.fft.fft(sym))))}, expected {hop.n_sc[g]}")
