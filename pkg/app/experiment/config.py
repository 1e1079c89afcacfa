"""Experiment configuration.

A config file holds one `section.key=value` per line (OmegaConf dotlist
syntax, `#` starts a comment); `.yaml`/`.yml` files are read as YAML.
Values merge onto the structured defaults below, then `--set` overrides.
"""

import itertools
import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Union

from omegaconf import OmegaConf
from omegaconf.errors import OmegaConfBaseException

from app.constants import ADULT_AGE, AGE_BOUNDS, PAIN_UNABLE_TOKENS, VITAL_BOUNDS
from app.errors import ConfigError, TriageError
from app.fusion.meta import MetaConfig
from app.gbdt.booster import GBDTConfig
from app.ingest import PreprocessConfig, SplitRatios
from app.synthgen import CohortSpec
from app.text.attention import AttentionConfig

logger = logging.getLogger(__name__)

REPORT_FORMATS = ("csv", "txt", "tex")


def _rates(lo: float, hi: float, step: float) -> List[float]:
    n = int(round((hi - lo) / step))
    return [round(lo + i * step, 10) for i in range(n + 1)]


@dataclass
class DataSection:
    source: str = "synthetic"
    csv: Optional[str] = None


@dataclass
class SplitSection:
    train: float = 0.6
    validation: float = 0.2
    test: float = 0.2


@dataclass
class PreprocessSection:
    adult_age: int = ADULT_AGE
    min_age: int = AGE_BOUNDS[0]
    max_age: int = AGE_BOUNDS[1]
    unable_tokens: List[str] = field(default_factory=lambda: list(PAIN_UNABLE_TOKENS))
    bounds: Dict[str, List[float]] = field(
        default_factory=lambda: {k: list(v) for k, v in VITAL_BOUNDS.items()}
    )


@dataclass
class SynthSection:
    n_records: int = 23000
    adult_fraction: float = 0.87
    acuity_prior: List[float] = field(default_factory=lambda: [0.05, 0.25, 0.45, 0.20, 0.05])
    missing_rate: float = 0.05
    text_noise: float = 0.15
    template_swap: float = 0.1
    shift_scale: float = 1.0
    workers: int = 1


@dataclass
class GBDTSection:
    n_estimators: int = 500
    learning_rate: float = 0.05
    early_stopping_rounds: int = 25
    max_depth: int = 6
    min_child_weight: float = 1.0
    reg_lambda: float = 1.0
    gamma: float = 0.0
    subsample: float = 1.0
    eval_metric: str = "auto"


@dataclass
class TextSection:
    # every ngram range is tried with every C; best validation macro-F1 wins
    grid_ngrams: List[str] = field(default_factory=lambda: ["1-3"])
    grid_C: List[float] = field(default_factory=lambda: [0.1])
    min_df: int = 1
    max_iter: int = 1000
    attention: bool = True
    d_model: int = 32
    d_k: int = 16
    epochs: int = 30
    batch_size: int = 64
    learning_rate: float = 0.01
    optimizer: str = "adam"
    max_tokens: int = 32
    threads: int = 0
    external_probs: Optional[str] = None
    # text probabilities fed to the meta-classifier: auto|tfidf|attention|external
    fusion_source: str = "auto"


@dataclass
class FusionSection:
    C: float = 1.0
    max_iter: int = 1000
    passes: int = 10
    meta_source: str = "validation"
    oof_folds: int = 5


@dataclass
class SweepSection:
    symmetric: List[float] = field(default_factory=lambda: _rates(0.0, 0.6, 0.1))
    asym_lo: float = 0.1
    asym_hi: float = 0.8
    asym_step: float = 0.1
    workers: int = 1


@dataclass
class StrataSection:
    dropout: float = 0.4


@dataclass
class OutputSection:
    dir: Optional[str] = None
    formats: List[str] = field(default_factory=lambda: ["csv", "txt"])


@dataclass
class ExperimentConfig:
    seed: int = 0
    data: DataSection = field(default_factory=DataSection)
    split: SplitSection = field(default_factory=SplitSection)
    preprocess: PreprocessSection = field(default_factory=PreprocessSection)
    synth: SynthSection = field(default_factory=SynthSection)
    gbdt: GBDTSection = field(default_factory=GBDTSection)
    text: TextSection = field(default_factory=TextSection)
    fusion: FusionSection = field(default_factory=FusionSection)
    sweep: SweepSection = field(default_factory=SweepSection)
    strata: StrataSection = field(default_factory=StrataSection)
    output: OutputSection = field(default_factory=OutputSection)

    # === Domain views ===

    def split_ratios(self) -> SplitRatios:
        return SplitRatios(self.split.train, self.split.validation, self.split.test)

    def preprocess_config(self) -> PreprocessConfig:
        bounds = {}
        for name, pair in self.preprocess.bounds.items():
            if len(pair) != 2:
                raise ConfigError(f"preprocess.bounds.{name} needs [min, max]")
            bounds[name] = (float(pair[0]), float(pair[1]))
        return PreprocessConfig(
            bounds=bounds,
            unable_tokens=tuple(t.lower() for t in self.preprocess.unable_tokens),
            adult_age=self.preprocess.adult_age,
            age_bounds=(self.preprocess.min_age, self.preprocess.max_age),
        )

    def cohort_spec(self) -> CohortSpec:
        s = self.synth
        return CohortSpec(
            n_records=s.n_records,
            adult_fraction=s.adult_fraction,
            acuity_prior=tuple(s.acuity_prior),
            missing_rate=s.missing_rate,
            text_noise=s.text_noise,
            template_swap=s.template_swap,
            shift_scale=s.shift_scale,
            bounds={**VITAL_BOUNDS, **self.preprocess_config().bounds},
            seed=self.seed,
        )

    def gbdt_config(self) -> GBDTConfig:
        g = self.gbdt
        return GBDTConfig(
            n_estimators=g.n_estimators,
            learning_rate=g.learning_rate,
            early_stopping_rounds=g.early_stopping_rounds,
            max_depth=g.max_depth,
            min_child_weight=g.min_child_weight,
            reg_lambda=g.reg_lambda,
            gamma=g.gamma,
            subsample=g.subsample,
            eval_metric=g.eval_metric,
            seed=self.seed,
        )

    def text_grid(self) -> list[tuple[tuple[int, int], float]]:
        ranges = []
        for item in self.text.grid_ngrams:
            try:
                lo, hi = (int(x) for x in str(item).split("-"))
            except ValueError:
                raise ConfigError(f"text.grid_ngrams entry '{item}' is not of the form lo-hi")
            ranges.append((lo, hi))
        grid = list(itertools.product(ranges, [float(c) for c in self.text.grid_C]))
        if not grid:
            raise ConfigError("text model grid is empty")
        return grid

    def attention_config(self) -> AttentionConfig:
        t = self.text
        return AttentionConfig(
            d_model=t.d_model,
            d_k=t.d_k,
            epochs=t.epochs,
            batch_size=t.batch_size,
            learning_rate=t.learning_rate,
            optimizer=t.optimizer,
            max_tokens=t.max_tokens,
            seed=self.seed,
        )

    def meta_config(self) -> MetaConfig:
        return MetaConfig(C=self.fusion.C, max_iter=self.fusion.max_iter, passes=self.fusion.passes)

    def fusion_text_source(self) -> str:
        source = self.text.fusion_source
        if source == "auto":
            if self.text.external_probs:
                return "external"
            return "attention" if self.text.attention else "tfidf"
        return source

    def asymmetric_rates(self) -> List[float]:
        s = self.sweep
        if s.asym_step <= 0 or s.asym_hi < s.asym_lo:
            raise ConfigError("asymmetric grid needs asym_step > 0 and asym_hi >= asym_lo")
        return _rates(s.asym_lo, s.asym_hi, s.asym_step)

    def validate(self) -> "ExperimentConfig":
        if self.seed < 0:
            raise ConfigError("seed must be >= 0")
        if self.data.source not in ("synthetic", "csv"):
            raise ConfigError(f"unknown data.source '{self.data.source}'")
        if self.data.source == "csv" and not self.data.csv:
            raise ConfigError("data.source=csv needs data.csv")
        if self.data.source == "synthetic" and self.data.csv:
            raise ConfigError("data.csv is set but data.source is synthetic, pick one")
        if self.fusion.meta_source not in ("validation", "oof"):
            raise ConfigError(f"unknown fusion.meta_source '{self.fusion.meta_source}'")
        if self.fusion.meta_source == "oof" and self.fusion.oof_folds < 2:
            raise ConfigError("fusion.oof_folds must be >= 2")
        source = self.fusion_text_source()
        if source not in ("tfidf", "attention", "external"):
            raise ConfigError(f"unknown text.fusion_source '{source}'")
        if source == "attention" and not self.text.attention:
            raise ConfigError("text.fusion_source=attention but text.attention is off")
        if source == "external" and not self.text.external_probs:
            raise ConfigError("text.fusion_source=external needs text.external_probs")
        if source == "external" and self.fusion.meta_source == "oof":
            raise ConfigError("out-of-fold meta training cannot refit external text probabilities")
        unknown = sorted(set(self.output.formats) - set(REPORT_FORMATS))
        if unknown:
            raise ConfigError(f"unknown report format(s): {', '.join(unknown)}")
        for p in list(self.sweep.symmetric) + [self.strata.dropout]:
            if not 0.0 <= p <= 1.0:
                raise ConfigError(f"dropout rate {p} outside [0, 1]")
        # domain constructors carry their own checks
        self.split_ratios()
        self.preprocess_config()
        self.gbdt_config()
        self.text_grid()
        self.asymmetric_rates()
        if self.text.attention:
            self.attention_config()
        if self.data.source == "synthetic":
            self.cohort_spec()
        return self


def _read_file(path: Path):
    if path.suffix in (".yaml", ".yml"):
        return OmegaConf.load(path)
    lines = []
    with open(path, "r", encoding="utf-8") as f:
        for raw in f:
            line = raw.split("#", 1)[0].strip()
            if line:
                lines.append(line)
    return OmegaConf.from_dotlist(lines)


def load_config(
    path: Optional[Union[str, Path]] = None,
    overrides: Sequence[str] = (),
) -> ExperimentConfig:
    try:
        merged = OmegaConf.structured(ExperimentConfig)
        if path is not None:
            merged = OmegaConf.merge(merged, _read_file(Path(path)))
        if overrides:
            merged = OmegaConf.merge(merged, OmegaConf.from_dotlist(list(overrides)))
        cfg = OmegaConf.to_object(merged)
    except FileNotFoundError as e:
        raise ConfigError(f"config file not found: {path}") from e
    except OmegaConfBaseException as e:
        raise ConfigError(str(e).splitlines()[0]) from e

    try:
        return cfg.validate()
    except TriageError:
        raise
    except (TypeError, ValueError) as e:
        raise ConfigError(str(e)) from e


def to_yaml(cfg: ExperimentConfig) -> str:
    return OmegaConf.to_yaml(OmegaConf.structured(cfg))


def to_dict(cfg: ExperimentConfig) -> dict:
    return OmegaConf.to_container(OmegaConf.structured(cfg))
