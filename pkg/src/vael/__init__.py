"""vael: a variational autoencoder whose symbolic latent drives an exact
probabilistic logic program.

Subpackages:
  logic     -- dialect parser, grounding, possible-world inference
  autodiff  -- minimal reverse-mode tensor engine (float64, numpy-backed)

Modules:
  model      -- the generative model and its downstream operations
  training   -- optimization loop, checkpoints, deterministic resumption
  data       -- IDX parsing, paired-digit dataset construction, PGM I/O
  synth      -- deterministic synthetic digit glyphs (self-contained runs)
  evaluation -- independent digit classifier and the three metrics
  cli        -- command-line surface
"""

__version__ = "0.1.0"
