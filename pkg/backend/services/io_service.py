"""
IO Service - text formats read and written by the CLI and the HTTP API

  permutation set    one permutation per line, whitespace-separated one-based image
  distribution       `weight  i1 ... in` per line; weights may be decimals or "num/den"
  group mask         one boolean (1/0/true/false) per entry, whitespace-separated
  data CSV           header row, column `x` required, optional `y` and `group`

Blank lines and anything after `#` are ignored in the three text formats.
"""
import json
import logging
from fractions import Fraction
from pathlib import Path
from typing import Dict, Iterable, List, Optional, Sequence, Tuple

import numpy as np
import pandas as pd

from services.errors import DimensionError, ParseError, PermkitError
from services.permutation_service import Perm
from services.distribution_service import PermDistribution

logger = logging.getLogger(__name__)

TRUE_TOKENS = {'1', 'true', 't', 'yes'}
FALSE_TOKENS = {'0', 'false', 'f', 'no'}


def _content_lines(text: str) -> Iterable[Tuple[int, str]]:
    for number, raw in enumerate(text.splitlines(), start=1):
        line = raw.split('#', 1)[0].strip()
        if line:
            yield number, line


def _read_text(path) -> str:
    try:
        return Path(path).read_text(encoding='utf-8')
    except FileNotFoundError:
        raise ParseError("file not found", source=str(path))
    except OSError as e:
        raise ParseError(f"cannot read file: {e}", source=str(path))


def _parse_perm(tokens: Sequence[str], source: str, number: int) -> Perm:
    try:
        return Perm(tuple(int(t) for t in tokens))
    except ValueError:
        raise ParseError(f"permutation entries must be integers: {' '.join(tokens)}", source, number)
    except PermkitError as e:
        raise ParseError(e.message, source, number)


def parse_perm_set(text: str, source: str = '<perms>', allow_empty: bool = False) -> List[Perm]:
    """Permutations in file order; duplicates and mixed n are rejected"""
    perms: List[Perm] = []
    seen = set()
    for number, line in _content_lines(text):
        perm = _parse_perm(line.split(), source, number)
        if perms and perm.n != perms[0].n:
            raise ParseError(f"permutation acts on n={perm.n}, earlier lines on n={perms[0].n}", source, number)
        if perm in seen:
            raise ParseError(f"duplicate permutation {perm}", source, number)
        seen.add(perm)
        perms.append(perm)
    if not perms and not allow_empty:
        raise ParseError("no permutations found", source)
    return perms


def parse_distribution(text: str, source: str = '<dist>') -> PermDistribution:
    perms: List[Perm] = []
    weights: List[Fraction] = []
    for number, line in _content_lines(text):
        tokens = line.split()
        if len(tokens) < 2:
            raise ParseError("expected a weight followed by a permutation", source, number)
        try:
            weight = Fraction(tokens[0])
        except (ValueError, ZeroDivisionError):
            raise ParseError(f"cannot parse weight {tokens[0]!r}", source, number)
        if weight < 0:
            raise ParseError(f"weight must be nonnegative, got {tokens[0]}", source, number)
        perm = _parse_perm(tokens[1:], source, number)
        if perms and perm.n != perms[0].n:
            raise ParseError(f"permutation acts on n={perm.n}, earlier lines on n={perms[0].n}", source, number)
        if perm in perms:
            raise ParseError(f"duplicate permutation {perm}", source, number)
        perms.append(perm)
        weights.append(weight)
    if not perms:
        raise ParseError("no weighted permutations found", source)
    try:
        dist = PermDistribution.from_weights(perms, weights)
    except PermkitError as e:
        raise ParseError(e.message, source)
    if dist.raw_total != 1.0:
        logger.info(f"{source}: weights sum to {dist.raw_total}, normalized")
    return dist


def parse_mask(text: str, source: str = '<mask>') -> np.ndarray:
    entries = []
    for number, line in _content_lines(text):
        for token in line.replace(',', ' ').split():
            key = token.lower()
            if key in TRUE_TOKENS:
                entries.append(True)
            elif key in FALSE_TOKENS:
                entries.append(False)
            else:
                raise ParseError(f"mask entries must be boolean, got {token!r}", source, number)
    if not entries:
        raise ParseError("empty group mask", source)
    return np.array(entries, dtype=bool)


def load_perm_set(path, allow_empty: bool = False) -> List[Perm]:
    return parse_perm_set(_read_text(path), source=str(path), allow_empty=allow_empty)


def load_distribution(path) -> PermDistribution:
    return parse_distribution(_read_text(path), source=str(path))


def load_mask(path) -> np.ndarray:
    return parse_mask(_read_text(path), source=str(path))


def _bool_column(column: pd.Series, source: str) -> np.ndarray:
    values = []
    for row, item in enumerate(column.tolist()):
        key = str(item).strip().lower()
        if key in TRUE_TOKENS or key == '1.0':
            values.append(True)
        elif key in FALSE_TOKENS or key == '0.0':
            values.append(False)
        else:
            # header is line 1
            raise ParseError(f"group entries must be boolean, got {item!r}", source, row + 2)
    return np.array(values, dtype=bool)


def _float_column(frame: pd.DataFrame, name: str, source: str) -> np.ndarray:
    numeric = pd.to_numeric(frame[name], errors='coerce')
    bad = numeric.isna()
    if bad.any():
        row = int(np.flatnonzero(bad.to_numpy())[0])
        raise ParseError(f"column {name!r} needs a number, got {frame[name].iloc[row]!r}", source, row + 2)
    return numeric.to_numpy(dtype=float)


def load_data(path) -> Dict[str, Optional[np.ndarray]]:
    """CSV with header; returns {'x', 'y', 'group'} with absent columns as None"""
    source = str(path)
    try:
        frame = pd.read_csv(path, dtype=str, skipinitialspace=True, comment='#')
    except FileNotFoundError:
        raise ParseError("file not found", source=source)
    except (pd.errors.ParserError, pd.errors.EmptyDataError, UnicodeDecodeError) as e:
        raise ParseError(f"malformed CSV: {e}", source=source)
    frame.columns = [str(c).strip() for c in frame.columns]
    if 'x' not in frame.columns:
        raise ParseError("CSV needs a column named 'x'", source, 1)
    if frame.empty:
        raise ParseError("CSV has no data rows", source)

    data = {
        'x': _float_column(frame, 'x', source),
        'y': _float_column(frame, 'y', source) if 'y' in frame.columns else None,
        'group': _bool_column(frame['group'], source) if 'group' in frame.columns else None,
    }
    logger.debug(f"Loaded {source}: n={data['x'].shape[0]}, columns={list(frame.columns)}")
    return data


def perms_from_lists(images: Sequence[Sequence[int]], source: str = '<request>') -> List[Perm]:
    """Permutations given as JSON-style lists of one-based images"""
    if not isinstance(images, (list, tuple)):
        raise ParseError("permutations must be a list of images", source)
    text = '\n'.join(' '.join(str(v) for v in image) if isinstance(image, (list, tuple)) else str(image)
                     for image in images)
    return parse_perm_set(text, source=source, allow_empty=True)


def perm_from_list(image: Sequence[int], source: str = '<request>') -> Perm:
    """A single permutation given as a JSON-style list, parsed like a file line"""
    if not isinstance(image, (list, tuple)) or not image:
        raise ParseError("a permutation must be a nonempty list of one-based images", source)
    perms = perms_from_lists([image], source=source)
    if not perms:
        raise ParseError("a permutation must be a nonempty list of one-based images", source)
    return perms[0]


def distribution_from_lists(images: Sequence[Sequence[int]], weights: Sequence,
                            source: str = '<request>') -> PermDistribution:
    if len(images) != len(weights):
        raise DimensionError(f"{len(images)} permutations but {len(weights)} weights")
    text = '\n'.join(f"{w} " + ' '.join(str(v) for v in image) for w, image in zip(weights, images))
    return parse_distribution(text, source=source)


def format_perm_set(perms: Iterable[Perm]) -> str:
    return ''.join(f"{p}\n" for p in perms)


def emit_json(payload: Dict) -> str:
    return json.dumps(payload, indent=2) + '\n'


def require_length(name: str, values: Optional[np.ndarray], n: int):
    if values is not None and values.shape[0] != n:
        raise DimensionError(f"{name} has length {values.shape[0]}, data has n={n}")

