from __future__ import annotations

import pytest

from unlearning_lab.exceptions import PreconditionError, TokenizerError
from unlearning_lab.services.lm.sequences import answer_ids, collate, prompt_ids, qa_example
from unlearning_lab.services.lm.tokenizer import SPECIAL_TOKENS, Tokenizer


def test_special_tokens_come_first(tiny_tokenizer) -> None:
    assert tiny_tokenizer.id_to_token[: len(SPECIAL_TOKENS)] == list(SPECIAL_TOKENS)
    assert (tiny_tokenizer.pad_id, tiny_tokenizer.bos_id) == (0, 1)
    assert (tiny_tokenizer.eos_id, tiny_tokenizer.sep_id) == (2, 3)


def test_decode_rejoins_punctuation(tiny_tokenizer) -> None:
    ids = tiny_tokenizer.encode("Who directed Tarin Vale?")

    assert tiny_tokenizer.decode(ids) == "Who directed Tarin Vale?"
    assert tiny_tokenizer.decode([tiny_tokenizer.bos_id, *ids[:2]]) == "Who directed"


def test_decode_rejoins_contractions_and_hyphenated_words() -> None:
    text = "Ana Lovo-Kasi don't know Tarin Vale, do they?"
    tokenizer = Tokenizer.build([text])

    assert tokenizer.decode(tokenizer.encode(text)) == text


def test_unknown_word_is_rejected(tiny_tokenizer) -> None:
    assert not tiny_tokenizer.covers("Who directed Kinshasa?")
    with pytest.raises(TokenizerError, match="Kinshasa"):
        tiny_tokenizer.encode("Who directed Kinshasa?")


def test_tokenizer_is_case_sensitive(tiny_tokenizer) -> None:
    with pytest.raises(TokenizerError):
        tiny_tokenizer.encode("who")


def test_saved_vocabulary_loads_identically(tiny_tokenizer, tmp_path) -> None:
    path = tmp_path / "tokenizer.json"
    tiny_tokenizer.save(path)

    assert Tokenizer.load(path).id_to_token == tiny_tokenizer.id_to_token


def test_duplicate_vocabulary_entry_is_an_error() -> None:
    with pytest.raises(TokenizerError):
        Tokenizer(["Ana", "Ana"])


def test_question_layout_masks_only_the_answer(tiny_tokenizer) -> None:
    question = "Who directed Tarin Vale?"
    example = qa_example(tiny_tokenizer, question, "Ana Lovo", eos=False)

    prompt = prompt_ids(tiny_tokenizer, question)
    assert prompt[0] == tiny_tokenizer.bos_id
    assert prompt[-1] == tiny_tokenizer.sep_id
    assert list(example.token_ids) == prompt + answer_ids(tiny_tokenizer, "Ana Lovo")
    assert example.loss_mask == (0.0,) * (len(prompt) - 1) + (1.0, 1.0)

    with_eos = qa_example(tiny_tokenizer, question, "Ana Lovo")
    assert with_eos.token_ids[-1] == tiny_tokenizer.eos_id
    assert sum(with_eos.loss_mask) == 3.0


def test_collate_pads_with_zero_weight(tiny_tokenizer) -> None:
    short = qa_example(tiny_tokenizer, "Who directed Tarin Vale?", "Ana Lovo", eos=False)
    long = qa_example(
        tiny_tokenizer, "Who directed Tarin Vale?", "Ana Lovo Beno Kasi", eos=False
    )

    batch = collate([short, long], tiny_tokenizer.pad_id)

    assert batch.inputs.shape == (2, len(long.token_ids) - 1)
    assert batch.mask[0].sum() == 2.0
    assert batch.mask[1].sum() == 4.0
    assert batch.targets[0, -1] == tiny_tokenizer.pad_id


def test_empty_answer_and_batch_are_preconditions(tiny_tokenizer) -> None:
    with pytest.raises(PreconditionError):
        answer_ids(tiny_tokenizer, "")
    with pytest.raises(PreconditionError):
        collate([], tiny_tokenizer.pad_id)
