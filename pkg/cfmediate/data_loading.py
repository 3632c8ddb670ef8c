from abc import ABC, abstractmethod
from collections import OrderedDict
import logging
import os

import pandas as pd

from cfmediate.exceptions import ValidationError
from cfmediate.graph import VARIABLE_NAME
from cfmediate.scm import Dataset, Regime

REGIME_SUFFIX = '.regime'


def _not_utf8(path, error):
    return ValidationError("{}: not UTF-8 text, byte {} at offset {}".format(
        path, hex(error.object[error.start]), error.start))


# General abstract class for reading and writing datasets of endogenous
# assignments stored in some file format.
# Provided as a template for the implementation of alternative data formats.
class DataLoader(ABC):

    @abstractmethod
    def load(self, path, domains=None):
        pass

    @abstractmethod
    def write(self, dataset, path):
        pass

    # return a standard collection of metadata parameters describing the data
    def get_metadata(self, dataset):
        return OrderedDict([
            ('num_rows', len(dataset)),
            ('columns', list(dataset.columns)),
            ('regime', str(dataset.regime)),
            ('seed', dataset.seed)
            ])

    def log_value_breakdown(self, dataset, logger=None):

        if not logger: logger = logging.getLogger()

        logger.info("Number of rows under {}: {}".format(dataset.regime,
            len(dataset)))
        for column in dataset.columns:
            counts = dataset.frame[column].value_counts(sort=False)
            for label in sorted(counts.index):
                percentage = 100. * counts[label] / len(dataset)
                logger.info("{}={}: {} rows ({:.3f}%)".format(column, label,
                    counts[label], percentage))


# Delimiter-separated text implementation of DataLoader. The first line is
# the header of variable names; the regime is declared in a sidecar file
# <path>.regime holding 'observational', 'do:VAR=value,...',
# 'randomize:VAR,...' or 'do:...;randomize:...'.
class CSVDataLoader(DataLoader):

    def __init__(self, delimiter=','):
        if len(delimiter) != 1:
            raise ValueError("Invalid delimiter: {!r}. Select a single "
                    "character.".format(delimiter))
        self.delimiter = delimiter

    @staticmethod
    def regime_path(path):
        return path + REGIME_SUFFIX

    def read_regime(self, path):
        regime_path = self.regime_path(path)
        if not os.path.isfile(regime_path):
            raise ValidationError("Missing regime declaration {} for dataset "
                    "{}".format(regime_path, path))
        try:
            with open(regime_path, 'r', encoding='utf-8') as f:
                lines = [line.strip() for line in f
                        if line.strip() and not line.startswith('#')]
        except UnicodeDecodeError as e:
            raise _not_utf8(regime_path, e)
        if len(lines) != 1:
            raise ValidationError("Regime declaration {} must hold exactly one "
                    "regime line".format(regime_path))
        return Regime.parse(lines[0])

    def load(self, path, domains=None):
        if not os.path.isfile(path):
            raise ValidationError("Dataset not found: {}".format(path))
        try:
            with open(path, 'r', encoding='utf-8') as f:
                header = f.readline().rstrip('\r\n').split(self.delimiter)
                f.read()
        except UnicodeDecodeError as e:
            raise _not_utf8(path, e)
        seen = set()
        for name in header:
            if not VARIABLE_NAME.match(name):
                raise ValidationError("{}: invalid column name {!r} in the "
                        "header".format(path, name))
            if name in seen:
                raise ValidationError("{}: duplicate column {} in the "
                        "header".format(path, name))
            seen.add(name)

        try:
            frame = pd.read_csv(path, sep=self.delimiter, dtype=str,
                    keep_default_na=False, na_filter=False)
        except pd.errors.ParserError as e:
            raise ValidationError("{}: malformed row: {}".format(path, e))
        if frame.empty:
            raise ValidationError("{}: dataset has no rows".format(path))
        empty = frame.isna() | (frame == '')
        if empty.values.any():
            row = int(empty.any(axis=1).idxmax())
            column = empty.columns[empty.loc[row].values.argmax()]
            raise ValidationError("{}: row {} has no value for "
                    "{}".format(path, row + 1, column))
        regime = self.read_regime(path)
        for name, value in regime.fixings.items():
            if name in frame.columns:
                mismatch = frame[name] != value
                if mismatch.any():
                    row = int(mismatch.idxmax())
                    raise ValidationError("{}: row {} has {}={} under regime "
                            "{}".format(path, row + 1, name,
                                frame[name][row], regime))
        try:
            dataset = Dataset(frame, regime=regime, domains=domains)
        except ValidationError as e:
            raise ValidationError("{}: {}".format(path, e))
        logging.getLogger(__name__).info("Loaded {} rows from {} ({})".format(
            len(dataset), path, regime))
        return dataset

    def write(self, dataset, path):
        dataset.frame.to_csv(path, sep=self.delimiter, index=False,
                lineterminator='\n')
        with open(self.regime_path(path), 'w', encoding='utf-8') as f:
            f.write("{}\n".format(dataset.regime))
        logging.getLogger(__name__).info("Wrote {} rows to {}".format(
            len(dataset), path))
        return path
