"""Character-level tokenizer with reserved special ids."""

from __future__ import annotations

import string

from ddlm.errors import DataError

PAD, BOS, EOS, MASK = 0, 1, 2, 3
SPECIAL_NAMES = {PAD: "<pad>", BOS: "<bos>", EOS: "<eos>", MASK: "<mask>"}
ALPHABET = string.digits + "+-*/()=,:>|._" + string.ascii_letters + " \n"


class Tokenizer:
    pad_id = PAD
    bos_id = BOS
    eos_id = EOS
    mask_id = MASK

    def __init__(self, alphabet: str = ALPHABET):
        if len(set(alphabet)) != len(alphabet):
            raise ValueError("alphabet contains duplicate characters")
        self.alphabet = alphabet
        self._offset = len(SPECIAL_NAMES)
        self._to_id = {ch: i + self._offset for i, ch in enumerate(alphabet)}
        self._to_ch = {i: ch for ch, i in self._to_id.items()}

    @property
    def vocab_size(self) -> int:
        return self._offset + len(self.alphabet)

    def encode(self, text: str) -> list[int]:
        try:
            return [self._to_id[ch] for ch in text]
        except KeyError as exc:
            raise DataError(f"character {exc.args[0]!r} is outside the tokenizer alphabet") from None

    def decode(self, ids, *, stop_at_eos: bool = False, keep_special: bool = False) -> str:
        out = []
        for i in ids:
            i = int(i)
            if i == EOS and stop_at_eos:
                break
            if i in self._to_ch:
                out.append(self._to_ch[i])
            elif keep_special and i in SPECIAL_NAMES:
                out.append(SPECIAL_NAMES[i])
            elif i not in SPECIAL_NAMES:
                raise DataError(f"token id {i} out of range [0, {self.vocab_size})")
        return "".join(out)

    def render(self, ids) -> str:
        """Human-readable rendering that shows special tokens."""
        return self.decode(ids, keep_special=True)
