"""On-disk cache of base-model probabilities shared by train, sweep and strata.

Layout under `<out>/artifacts/`:
  labels.csv             record_id,split,acuity,age_at_visit
  tab_<split>.csv        probability-exchange rows from the tabular model
  text_<split>.csv       probability-exchange rows from the fusion text source
where split is one of meta, test, pediatric.
"""

from dataclasses import dataclass
from pathlib import Path

import numpy as np
import pandas as pd

from app.errors import DataError
from app.fusion.stacking import StackedFeatures, stack_probabilities
from app.text.external import read_prob_csv, write_prob_csv
from app.utils import atomic_write_text, csv_text

SPLITS = ("meta", "test", "pediatric")
LABEL_COLUMNS = ("record_id", "split", "acuity", "age_at_visit")


@dataclass
class SplitProbs:
    ids: list[str]
    labels: np.ndarray
    ages: np.ndarray
    tab: np.ndarray
    text: np.ndarray

    def __len__(self) -> int:
        return len(self.ids)

    def stacked(self) -> StackedFeatures:
        return stack_probabilities(self.tab, self.text)


@dataclass
class BaseArtifacts:
    splits: dict[str, SplitProbs]

    def __getitem__(self, split: str) -> SplitProbs:
        return self.splits[split]

    def save(self, root: Path) -> None:
        frames = []
        for split in SPLITS:
            part = self.splits[split]
            write_prob_csv(root / f"tab_{split}.csv", part.ids, part.tab)
            write_prob_csv(root / f"text_{split}.csv", part.ids, part.text)
            frames.append(
                pd.DataFrame(
                    {
                        "record_id": [str(i) for i in part.ids],
                        "split": split,
                        "acuity": np.asarray(part.labels, dtype=np.int64),
                        "age_at_visit": np.asarray(part.ages, dtype=np.int64),
                    },
                    columns=list(LABEL_COLUMNS),
                )
            )
        atomic_write_text(root / "labels.csv", csv_text(pd.concat(frames, ignore_index=True)))

    @classmethod
    def load(cls, root: Path) -> "BaseArtifacts":
        labels_path = root / "labels.csv"
        if not labels_path.exists():
            raise DataError(f"missing base artifacts in {root}")
        labels = pd.read_csv(labels_path, dtype={"record_id": str, "split": str}, keep_default_na=False)
        if list(labels.columns) != list(LABEL_COLUMNS):
            raise DataError(f"{labels_path}: unexpected columns {list(labels.columns)}")

        splits = {}
        for split in SPLITS:
            part = labels[labels["split"] == split]
            ids = part["record_id"].tolist()
            probs = {}
            for source in ("tab", "text"):
                path = root / f"{source}_{split}.csv"
                if not path.exists():
                    raise DataError(f"missing base artifact {path}")
                file_ids, values = read_prob_csv(path)
                if file_ids != ids:
                    raise DataError(f"{path} rows do not match labels.csv")
                probs[source] = values
            splits[split] = SplitProbs(
                ids=ids,
                labels=part["acuity"].to_numpy(dtype=np.int64),
                ages=part["age_at_visit"].to_numpy(dtype=np.int64),
                tab=probs["tab"],
                text=probs["text"],
            )
        return cls(splits)
