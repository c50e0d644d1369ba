"""The generative model: encoder posterior, facts head, world relaxation,
decoder likelihood, objective terms, and the downstream operations
(classification, generation, conditional generation, program swapping).

The latent code is ``[z | z_sym]``: the first M dimensions carry appearance,
the last N drive the per-group fact probabilities through a small MLP.  The
decoder consumes ``z`` plus a distribution over possible worlds (relaxed
during training, exact one-hot at generation time).
"""
from __future__ import annotations

from dataclasses import asdict, dataclass, field, replace

import numpy as np

from . import autodiff as ad
from .autodiff import Tensor
from .logic import (
    Atom,
    InconsistentEvidenceError,
    conjunction,
    entailment_mask,
    enumerate_worlds,
    evidence_conditional,
    ground,
    parse_formula,
    parse_program,
    sample_world,
    world_probabilities,
)
from .logic.syntax import Var


class ModelError(Exception):
    pass


class ProgramMismatchError(ModelError):
    """The replacement program's probabilistic choice groups differ from the trained ones."""


class LabelDomainError(ModelError):
    """A label or digit value lies outside the program's domain."""


@dataclass(frozen=True)
class ModelConfig:
    m: int = 8  # subsymbolic latent width
    n: int = 15  # symbolic latent width
    image_h: int = 28
    image_w: int = 56
    arch: str = "conv"  # "conv" | "mlp"
    conv_channels: tuple = (16, 32, 64)
    mlp_hidden: int = 256
    facts_hidden: int = 20
    w_rec: float = 0.1
    w_kl: float = 1e-5
    w_q: float = 1.0
    temperature: float = 1.0
    learn_sigma: bool = False  # identity posterior covariance by default
    mean_scale: float | None = 3.0  # smooth bound on the posterior mean; None = raw linear head
    logprob_floor: float = 1e-12
    world_cap: int = 100_000

    def to_metadata(self) -> dict:
        meta = asdict(self)
        meta["conv_channels"] = list(self.conv_channels)
        return meta

    @staticmethod
    def from_metadata(meta: dict) -> "ModelConfig":
        kwargs = {k: meta[k] for k in ModelConfig.__dataclass_fields__ if k in meta}
        kwargs["conv_channels"] = tuple(kwargs.get("conv_channels", (16, 32, 64)))
        return ModelConfig(**kwargs)


@dataclass
class GaussianPosterior:
    mean: Tensor  # (B, M+N)
    log_std: Tensor  # (B, M+N)


@dataclass
class LatentCode:
    z: Tensor  # (B, M)
    z_sym: Tensor  # (B, N)


@dataclass
class RelaxedWorld:
    weights: Tensor  # (B, J) on the simplex
    temperature: float


@dataclass
class GeneratedSample:
    image: np.ndarray
    label: int
    world: object


@dataclass
class ConditionalSample:
    image: np.ndarray
    world: object


@dataclass
class ClassifyResult:
    labels: tuple  # ordered label values
    probabilities: np.ndarray  # (B, K)
    predictions: np.ndarray  # (B,) label values


def _conv_out(h, w):
    for _ in range(3):
        h = (h + 2 - 4) // 2 + 1
        w = (w + 2 - 4) // 2 + 1
    return h, w


class VaelModel:
    def __init__(self, program_text: str, config: ModelConfig, rng: np.random.Generator):
        self.config = config
        self.params = []
        self._load_program(program_text)
        self._build_networks(rng)

    # -- program wiring -----------------------------------------------------

    def _load_program(self, program_text: str):
        program = parse_program(program_text)
        gp = ground(program)
        worlds = enumerate_worlds(gp, cap=self.config.world_cap)
        self.program = program
        self.program_text = program_text
        self.gp = gp
        self.worlds = worlds
        self.J = len(worlds)
        self.P = gp.n_slots

        sel = np.zeros((self.J, self.P))
        for w in worlds:
            for off, c in zip(gp.group_offsets, w.choices):
                sel[w.index, off + c] = 1.0
        self.selection = sel

        # map (group, integer value of the choice atom's last argument) -> choice index
        self._choice_by_value = []
        for adj in gp.ads:
            table = {}
            for idx, atom in enumerate(adj.choices):
                if atom is not None and atom.args and isinstance(atom.args[-1], int):
                    table[atom.args[-1]] = idx
            self._choice_by_value.append(table)

        self._label_cache = None

    def _label_info(self):
        """(query pred, arg template, var position, label values, per-world label, matrix)."""
        if self._label_cache is not None:
            return self._label_cache
        if len(self.program.queries) != 1:
            raise ModelError("label operations need exactly one query(...) directive")
        pattern = self.program.queries[0]
        var_positions = [i for i, a in enumerate(pattern.args) if isinstance(a, Var)]
        if len(var_positions) != 1:
            raise ModelError(f"query pattern {pattern} must contain exactly one variable")
        pos = var_positions[0]

        world_label = []
        for w in self.worlds:
            matches = [
                a
                for a in w.closure
                if a.pred == pattern.pred
                and a.arity == pattern.arity
                and all(a.args[i] == pattern.args[i] for i in range(pattern.arity) if i != pos)
            ]
            if len(matches) != 1:
                raise ModelError(
                    f"world {w.index} entails {len(matches)} atoms matching {pattern}; need exactly 1"
                )
            world_label.append(matches[0].args[pos])
        values = tuple(sorted(set(world_label)))
        matrix = np.zeros((self.J, len(values)))
        col = {v: k for k, v in enumerate(values)}
        for i, v in enumerate(world_label):
            matrix[i, col[v]] = 1.0
        self._label_cache = (pattern, pos, values, tuple(world_label), matrix, col)
        return self._label_cache

    @property
    def label_values(self) -> tuple:
        return self._label_info()[2]

    def label_atom(self, value) -> Atom:
        pattern, pos, values, *_ = self._label_info()
        if value not in values:
            raise LabelDomainError(f"label {value} outside program domain {values}")
        args = list(pattern.args)
        args[pos] = value
        return Atom(pattern.pred, tuple(args))

    def digit_atoms(self, values) -> tuple:
        """Ground choice atoms for per-position digit supervision."""
        if len(values) != len(self.gp.ads):
            raise LabelDomainError(
                f"need one digit per group ({len(self.gp.ads)}), got {len(values)}"
            )
        atoms = []
        for g, v in enumerate(values):
            table = self._choice_by_value[g]
            if v not in table:
                raise LabelDomainError(f"unknown digit value {v} for position {g}")
            atoms.append(self.gp.ads[g].choices[table[v]])
        return tuple(atoms)

    def label_of_digits(self, values) -> int:
        """Query label of the unique world choosing the given digit values."""
        index = 0
        for g, v in enumerate(values):
            table = self._choice_by_value[g]
            if v not in table:
                raise LabelDomainError(f"unknown digit value {v} for position {g}")
            index = index * self.gp.ads[g].size + table[v]
        return self._label_info()[3][index]

    # -- networks -------------------------------------------------------------

    def _build_networks(self, rng):
        cfg = self.config
        mn = cfg.m + cfg.n
        head_out = 2 * mn if cfg.learn_sigma else mn
        if cfg.arch == "conv":
            c1, c2, c3 = cfg.conv_channels
            h3, w3 = _conv_out(cfg.image_h, cfg.image_w)
            self._enc_convs = [
                ad.Conv2d(1, c1, 4, 2, 1, rng, "enc.conv0"),
                ad.Conv2d(c1, c2, 4, 2, 1, rng, "enc.conv1"),
                ad.Conv2d(c2, c3, 4, 2, 1, rng, "enc.conv2"),
            ]
            self._enc_head = ad.Linear(c3 * h3 * w3, head_out, rng, "enc.head")
            self._dec_lin = ad.Linear(cfg.m + self.J, c3 * h3 * w3, rng, "dec.lin")
            h2 = (cfg.image_h + 2 - 4) // 2 + 1
            w2 = (cfg.image_w + 2 - 4) // 2 + 1
            h1 = (h2 + 2 - 4) // 2 + 1
            w1 = (w2 + 2 - 4) // 2 + 1
            # output paddings chosen so each stage exactly mirrors the encoder
            op1 = (h1 - 2 * h3, w1 - 2 * w3)
            op2 = (h2 - 2 * h1, w2 - 2 * w1)
            op3 = (cfg.image_h - 2 * h2, cfg.image_w - 2 * w2)
            self._dec_convs = [
                ad.ConvTranspose2d(c3, c2, 4, 2, 1, rng, "dec.deconv0", output_padding=op1),
                ad.ConvTranspose2d(c2, c1, 4, 2, 1, rng, "dec.deconv1", output_padding=op2),
                ad.ConvTranspose2d(c1, 1, 4, 2, 1, rng, "dec.deconv2", output_padding=op3),
            ]
            # per-sample normalization keeps the Laplace loss from saturating the
            # final sigmoid into a dead all-black regime
            self._dec_norms = [ad.LayerNorm(c2, "dec.norm0"), ad.LayerNorm(c1, "dec.norm1")]
            self._latent_grid = (c3, h3, w3)
            layers = (
                self._enc_convs
                + [self._enc_head, self._dec_lin]
                + self._dec_convs
                + self._dec_norms
            )
        elif cfg.arch == "mlp":
            pixels = cfg.image_h * cfg.image_w
            self._enc_l1 = ad.Linear(pixels, cfg.mlp_hidden, rng, "enc.l1")
            self._enc_head = ad.Linear(cfg.mlp_hidden, head_out, rng, "enc.head")
            self._dec_l1 = ad.Linear(cfg.m + self.J, cfg.mlp_hidden, rng, "dec.l1")
            self._dec_l2 = ad.Linear(cfg.mlp_hidden, pixels, rng, "dec.l2")
            self._dec_norms = [ad.LayerNorm(cfg.mlp_hidden, "dec.norm0")]
            layers = [self._enc_l1, self._enc_head, self._dec_l1, self._dec_l2] + self._dec_norms
        else:
            raise ModelError(f"unknown architecture {cfg.arch!r}")

        self._facts_l1 = ad.Linear(cfg.n, cfg.facts_hidden, rng, "facts.l1")
        self._facts_l2 = ad.Linear(cfg.facts_hidden, self.P, rng, "facts.l2")
        layers += [self._facts_l1, self._facts_l2]
        self.params = [p for layer in layers for p in layer.params]

    # -- core ops ---------------------------------------------------------------

    def encode(self, x) -> GaussianPosterior:
        cfg = self.config
        x = np.asarray(x, dtype=np.float64)
        if x.ndim == 2:
            x = x[None]
        if x.shape[1:] != (cfg.image_h, cfg.image_w):
            raise ModelError(f"expected images of shape {(cfg.image_h, cfg.image_w)}, got {x.shape[1:]}")
        bsz = x.shape[0]
        mn = cfg.m + cfg.n
        if cfg.arch == "conv":
            t = Tensor(x.reshape(bsz, 1, cfg.image_h, cfg.image_w))
            for conv in self._enc_convs:
                t = ad.relu(conv(t))
            flat = ad.reshape(t, (bsz, -1))
            out = self._enc_head(flat)
        else:
            flat = Tensor(x.reshape(bsz, -1))
            out = self._enc_head(ad.relu(self._enc_l1(flat)))
        if cfg.learn_sigma:
            mean = ad.narrow(out, 1, 0, mn)
            log_std = ad.narrow(out, 1, mn, mn)
        else:
            mean = out
            log_std = Tensor(np.zeros((bsz, mn)))
        if cfg.mean_scale is not None:
            # keep posterior means commensurate with the standard-normal prior,
            # otherwise prior samples fall far off the decoder's training manifold
            mean = ad.scale(ad.tanh(ad.scale(mean, 1.0 / cfg.mean_scale)), cfg.mean_scale)
        return GaussianPosterior(mean, log_std)

    def reparam_sample(self, post: GaussianPosterior, eps) -> LatentCode:
        eps = np.asarray(eps, dtype=np.float64)
        code = ad.add(post.mean, ad.mul(ad.exp(post.log_std), Tensor(eps)))
        z = ad.narrow(code, 1, 0, self.config.m)
        z_sym = ad.narrow(code, 1, self.config.m, self.config.n)
        return LatentCode(z, z_sym)

    def facts_from_latent(self, z_sym) -> Tensor:
        """Per-group softmax over the facts-MLP output; literal groups stay fixed."""
        z_sym = ad.as_tensor(z_sym)
        logits = self._facts_l2(ad.relu(self._facts_l1(z_sym)))
        bsz = logits.shape[0]
        pieces = []
        for adj, off in zip(self.gp.ads, self.gp.group_offsets):
            block = ad.narrow(logits, 1, off, adj.size)
            if adj.is_learned:
                pieces.append(ad.softmax(block, axis=1))
            else:
                pieces.append(Tensor(np.tile(np.asarray(adj.probs), (bsz, 1))))
        return ad.concat(pieces, axis=1)

    def world_logits(self, p) -> Tensor:
        p = ad.as_tensor(p)
        logp = ad.log(ad.clamp_min(p, 1e-300))
        return ad.matmul(logp, Tensor(self.selection.T))

    def gumbel_softmax_sample(self, log_pi, lam, gumbel) -> RelaxedWorld:
        if lam <= 0:
            raise ValueError(f"temperature must be positive, got {lam}")
        log_pi = ad.as_tensor(log_pi)
        shifted = ad.add(log_pi, Tensor(np.asarray(gumbel, dtype=np.float64)))
        return RelaxedWorld(ad.softmax(ad.scale(shifted, 1.0 / lam), axis=1), lam)

    def decode(self, z, omega) -> Tensor:
        cfg = self.config
        z, omega = ad.as_tensor(z), ad.as_tensor(omega)
        if z.shape[1] != cfg.m or omega.shape[1] != self.J:
            raise ModelError(
                f"decode wants z (B,{cfg.m}) and world (B,{self.J}), got {z.shape} and {omega.shape}"
            )
        cat = ad.concat([z, omega], axis=1)
        bsz = cat.shape[0]
        if cfg.arch == "conv":
            c3, h3, w3 = self._latent_grid
            t = ad.reshape(ad.relu(self._dec_lin(cat)), (bsz, c3, h3, w3))
            t = ad.relu(self._dec_norms[0](self._dec_convs[0](t)))
            t = ad.relu(self._dec_norms[1](self._dec_convs[1](t)))
            out = ad.sigmoid(self._dec_convs[2](t))
        else:
            out = ad.sigmoid(self._dec_l2(ad.relu(self._dec_norms[0](self._dec_l1(cat)))))
        return ad.reshape(out, (bsz, cfg.image_h, cfg.image_w))

    # -- objective terms -------------------------------------------------------

    def reconstruction_loss(self, x, mu) -> Tensor:
        """Laplace log-likelihood with the normalization constant dropped: -sum |x - mu|."""
        x = np.asarray(x, dtype=np.float64)
        if x.ndim == 2:
            x = x[None]
        mu = ad.as_tensor(mu)
        if mu.shape != x.shape:
            raise ModelError(f"reconstruction shapes differ: {x.shape} vs {mu.shape}")
        return ad.neg(ad.sum_(ad.absval(ad.sub(mu, Tensor(x))), axis=(1, 2)))

    def _masked_log_success(self, p, masks) -> Tensor:
        pi = ad.exp(self.world_logits(p))
        s = ad.sum_(ad.mul(pi, Tensor(masks)), axis=1)
        return ad.log(ad.clamp_min(s, self.config.logprob_floor))

    def query_loss(self, p, y) -> Tensor:
        """log success probability of the observed labels; floored at the log floor."""
        y = np.atleast_1d(np.asarray(y))
        *_, matrix, col = self._label_info()
        masks = np.empty((len(y), self.J))
        for i, v in enumerate(y):
            value = v.item() if hasattr(v, "item") else v
            if value not in col:
                raise LabelDomainError(f"label {value} outside program domain")
            masks[i] = matrix[:, col[value]]
        return self._masked_log_success(p, masks)

    def kl_divergence(self, post: GaussianPosterior) -> Tensor:
        """Closed-form KL(q || standard normal), summed over latent dimensions."""
        mu, ls = post.mean, post.log_std
        ones = Tensor(np.ones(mu.shape))
        term = ad.sub(ad.add(ad.mul(mu, mu), ad.exp(ad.scale(ls, 2.0))), ad.add(ones, ad.scale(ls, 2.0)))
        return ad.scale(ad.sum_(term, axis=1), 0.5)

    def digit_supervision_loss(self, p, y_digits) -> Tensor:
        """log success of the per-position digit conjunction, rows independent."""
        y_digits = np.atleast_2d(np.asarray(y_digits))
        masks = np.empty((len(y_digits), self.J))
        for i, row in enumerate(y_digits):
            mask = np.ones(self.J)
            for atom in self.digit_atoms([int(v) for v in row]):
                mask = mask * entailment_mask(self.gp, atom)
            masks[i] = mask
        return self._masked_log_success(p, masks)

    def elbo(self, x, y, y_digits=None, eps=None, gumbel=None, rng=None):
        """Single-sample objective estimate.

        Returns (scalar loss tensor to minimize, dict of unweighted term means).
        ``y_digits`` is (B, n_groups) with -1 marking rows without digit
        supervision; ``eps``/``gumbel`` noise is drawn from ``rng`` when not
        supplied.
        """
        x = np.asarray(x, dtype=np.float64)
        if x.ndim == 2:
            x = x[None]
        y = np.atleast_1d(np.asarray(y))
        bsz = x.shape[0]
        cfg = self.config
        if eps is None:
            eps = rng.standard_normal((bsz, cfg.m + cfg.n))
        if gumbel is None:
            gumbel = rng.gumbel(size=(bsz, self.J))

        post = self.encode(x)
        code = self.reparam_sample(post, eps)
        p = self.facts_from_latent(code.z_sym)
        log_pi = self.world_logits(p)
        omega = self.gumbel_softmax_sample(log_pi, cfg.temperature, gumbel)
        mu_x = self.decode(code.z, omega.weights)

        l_rec = ad.mean(self.reconstruction_loss(x, mu_x))
        l_q = ad.mean(self.query_loss(p, y))
        kl = ad.mean(self.kl_divergence(post))

        total = ad.sub(
            ad.add(ad.scale(l_rec, cfg.w_rec), ad.scale(l_q, cfg.w_q)),
            ad.scale(kl, cfg.w_kl),
        )
        l_dig_value = 0.0
        if y_digits is not None:
            y_digits = np.atleast_2d(np.asarray(y_digits))
            sup = (y_digits >= 0).all(axis=1)
            if sup.any():
                rows = np.where(sup, y_digits.T, 0).T  # placeholder digits for masked rows
                l_dig_all = self.digit_supervision_loss(p, rows)
                l_dig = ad.mean(ad.mul(l_dig_all, Tensor(sup.astype(np.float64))))
                total = ad.add(total, ad.scale(l_dig, cfg.w_q))
                l_dig_value = l_dig.item()
        loss = ad.neg(total)
        breakdown = {
            "l_rec": l_rec.item(),
            "l_q": l_q.item(),
            "kl": kl.item(),
            "l_digits": l_dig_value,
        }
        return loss, breakdown

    def elbo_mc(self, x, y, n_samples: int, rng) -> float:
        """Monte-Carlo objective estimate averaged over fresh noise draws (no grad)."""
        with ad.no_grad():
            vals = []
            for _ in range(n_samples):
                loss, _ = self.elbo(x, y, rng=rng)
                vals.append(-loss.item())
        return float(np.mean(vals))

    # -- downstream operations ---------------------------------------------------

    def reconstruct(self, x) -> np.ndarray:
        """Deterministic reconstruction: posterior mean, exact world distribution."""
        with ad.no_grad():
            post = self.encode(x)
            mean = post.mean.data
            z = mean[:, : self.config.m]
            z_sym = mean[:, self.config.m :]
            p = self.facts_from_latent(Tensor(z_sym))
            pi = ad.exp(self.world_logits(p))
            return self.decode(Tensor(z), pi).data

    def classify(self, x) -> ClassifyResult:
        _, _, values, _, matrix, _ = self._label_info()
        with ad.no_grad():
            post = self.encode(x)
            mean = post.mean.data
            z_sym = mean[:, self.config.m :]
            p = self.facts_from_latent(Tensor(z_sym)).data
        logp = np.log(np.clip(p, 1e-300, None))
        pi = np.exp(logp @ self.selection.T)
        probs = pi @ matrix
        preds = np.array([values[k] for k in probs.argmax(axis=1)])
        return ClassifyResult(labels=values, probabilities=probs, predictions=preds)

    def _prior_facts(self, rng, n):
        z_all = rng.standard_normal((n, self.config.m + self.config.n))
        z = z_all[:, : self.config.m]
        z_sym = z_all[:, self.config.m :]
        with ad.no_grad():
            p = self.facts_from_latent(Tensor(z_sym)).data
        return z, p

    def generate(self, rng, n: int = 1):
        """Prior sample -> exact world sample -> decoded image and entailed label."""
        world_label = self._label_info()[3]
        z, p = self._prior_facts(rng, n)
        onehot = np.zeros((n, self.J))
        worlds = []
        for i in range(n):
            pi = world_probabilities(self.gp, p[i])
            idx = int(rng.choice(self.J, p=pi))
            onehot[i, idx] = 1.0
            worlds.append(self.worlds[idx])
        with ad.no_grad():
            images = self.decode(Tensor(z), Tensor(onehot)).data
        return [
            GeneratedSample(images[i], world_label[worlds[i].index], worlds[i])
            for i in range(n)
        ]

    def conditional_generate(self, evidence, rng, n: int = 1):
        """Evidence-coherent world samples decoded into images."""
        if isinstance(evidence, str):
            evidence = parse_formula(evidence)
        z, p = self._prior_facts(rng, n)
        onehot = np.zeros((n, self.J))
        worlds = []
        for i in range(n):
            dist = evidence_conditional(self.gp, p[i], evidence)
            w = sample_world(dist, rng)
            onehot[i, w.index] = 1.0
            worlds.append(w)
        with ad.no_grad():
            images = self.decode(Tensor(z), Tensor(onehot)).data
        return [ConditionalSample(images[i], worlds[i]) for i in range(n)]

    def swap_program(self, new_program_text: str) -> "VaelModel":
        """Replace clauses/queries; probabilistic groups and parameters stay fixed."""
        new_program = parse_program(new_program_text)
        if new_program.ads != self.program.ads:
            raise ProgramMismatchError(
                "replacement program declares different probabilistic choice groups"
            )
        old_selection = self.selection
        self._load_program(new_program_text)
        assert np.array_equal(self.selection, old_selection)
        return self

    # -- persistence helpers -------------------------------------------------

    def named_parameters(self) -> dict:
        return {p.name: p for p in self.params}

    def program_sha256(self) -> str:
        import hashlib

        return hashlib.sha256(self.program_text.encode("utf-8")).hexdigest()

    def metadata(self) -> dict:
        cfg = self.config
        return {
            "model": cfg.to_metadata(),
            "j": self.J,
            "p_slots": self.P,
            "program_sha256": self.program_sha256(),
        }
