"""
Irish-aware text normaliser for the ASR evaluation harness.

This module applies one deterministic pipeline to references and hypotheses
before scoring:

0. delete zero-width and control characters (whitespace controls survive)
1. NFC composition, so fadas (á é í ó ú) are single precomposed scalars
2. simple per-scalar lowercase mapping
3. punctuation and symbol removal (Unicode categories P* and S*); dashes
   become spaces and intra-word apostrophes may be kept
4. whitespace collapse

Initial mutations (lenition bh-, ch-, dh-; eclipsis mb-, gc-, nd-, bhf-) are
ordinary letters and pass through untouched.
"""

import logging
import unicodedata
from dataclasses import asdict, dataclass
from typing import Any, Dict, List, Optional

from .exceptions import NormalizationConfigError


logger = logging.getLogger(__name__)


APOSTROPHE_POLICIES = ("keep_intra_word", "strip_all")
DIGIT_POLICIES = ("keep", "reject")

APOSTROPHE = "'"
# Typographic apostrophe, folded to U+0027 before classification
RIGHT_SINGLE_QUOTATION_MARK = "’"


@dataclass(frozen=True)
class NormConfig:
    """
    Toggles and character-class policies for the normaliser.

    Attributes:
        lowercase: Apply the simple lowercase mapping
        strip_punctuation: Delete P* and S* characters (dashes become spaces)
        collapse_whitespace: Trim and collapse whitespace runs to one space
        apostrophe_policy: 'keep_intra_word' or 'strip_all'
        digit_policy: 'keep' or 'reject'
    """
    lowercase: bool = True
    strip_punctuation: bool = True
    collapse_whitespace: bool = True
    apostrophe_policy: str = "keep_intra_word"
    digit_policy: str = "keep"

    def __post_init__(self):
        if self.apostrophe_policy not in APOSTROPHE_POLICIES:
            raise ValueError(
                f"Unknown apostrophe policy '{self.apostrophe_policy}', "
                f"expected one of {list(APOSTROPHE_POLICIES)}"
            )
        if self.digit_policy not in DIGIT_POLICIES:
            raise ValueError(
                f"Unknown digit policy '{self.digit_policy}', "
                f"expected one of {list(DIGIT_POLICIES)}"
            )

    def to_dict(self) -> Dict[str, Any]:
        return asdict(self)

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> 'NormConfig':
        """Rebuild a snapshot recorded in meta.json; unknown keys are rejected."""
        known = set(cls.__dataclass_fields__)
        unknown = set(data) - known
        if unknown:
            raise ValueError(f"Unknown normaliser settings: {sorted(unknown)}")
        return cls(**data)


DEFAULT_NORM_CONFIG = NormConfig()


@dataclass(frozen=True)
class NormalizedText:
    """
    Output of the normaliser.

    Attributes:
        text: NFC string, single-space separated, no leading/trailing space
        word_count: Number of space-separated tokens
        char_count: Number of Unicode scalars in text, spaces included
    """
    text: str
    word_count: int
    char_count: int

    @classmethod
    def from_text(cls, text: str) -> 'NormalizedText':
        return cls(text=text, word_count=len(_split_words(text)), char_count=len(text))


def normalize(
    raw: str,
    config: NormConfig = DEFAULT_NORM_CONFIG,
    sample_id: Optional[str] = None
) -> NormalizedText:
    """
    Normalise one reference or hypothesis string.

    Args:
        raw: Any Unicode string, in any normal form
        config: Normaliser settings
        sample_id: Utterance identifier, used only in error messages

    Returns:
        NormalizedText: Normalised text with word and character counts

    Raises:
        NormalizationConfigError: digit_policy is 'reject' and raw has a digit
    """
    text = _strip_invisible(raw)

    if config.digit_policy == "reject":
        for ch in text:
            if unicodedata.category(ch) == "Nd":
                raise NormalizationConfigError(
                    f"Digit '{ch}' found while digit_policy=reject", sample_id=sample_id
                )

    text = unicodedata.normalize("NFC", text)

    if config.lowercase:
        text = _simple_lower(text)

    if config.strip_punctuation:
        text = _strip_punctuation(text, config.apostrophe_policy)

    if config.collapse_whitespace:
        text = " ".join(text.split())

    # Lowercasing and deletions can leave a decomposable sequence behind
    text = unicodedata.normalize("NFC", text)

    return NormalizedText.from_text(text)


def word_tokens(t: NormalizedText) -> List[str]:
    """Split normalised text on single spaces; empty text has no tokens."""
    return _split_words(t.text)


def char_tokens(t: NormalizedText) -> List[str]:
    """Unicode scalars of the normalised text in order, spaces included."""
    return list(t.text)


def _split_words(text: str) -> List[str]:
    if not text:
        return []
    return [token for token in text.split(" ") if token]


def _strip_invisible(text: str) -> str:
    """Delete control (Cc) and format (Cf) characters except whitespace."""
    return "".join(
        ch for ch in text
        if ch.isspace() or unicodedata.category(ch) not in ("Cc", "Cf")
    )


def _simple_lower(text: str) -> str:
    """
    Per-scalar lowercase mapping without locale or context rules.

    str.lower() applies the full mapping, which expands U+0130 to two
    scalars; the first scalar of the full mapping is the simple mapping.
    """
    out = []
    for ch in text:
        lowered = ch.lower()
        out.append(lowered if len(lowered) == 1 else lowered[0])
    return "".join(out)


def _strip_punctuation(text: str, apostrophe_policy: str) -> str:
    text = text.replace(RIGHT_SINGLE_QUOTATION_MARK, APOSTROPHE)
    out = []
    last = len(text) - 1
    for i, ch in enumerate(text):
        category = unicodedata.category(ch)
        if category[0] not in ("P", "S"):
            out.append(ch)
        elif ch == APOSTROPHE and apostrophe_policy == "keep_intra_word" \
                and 0 < i < last and text[i - 1].isalpha() and text[i + 1].isalpha():
            out.append(ch)
        elif category == "Pd":
            # Hyphenated compounds split rather than fuse
            out.append(" ")
    return "".join(out)
