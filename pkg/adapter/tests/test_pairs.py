"""Config validation and QA pairs file loading."""

import json

import pytest
from vlit_adapter import AdapterConfig, PairsFormatError, QaPairInput, load_pairs
from vlit_adapter.config import DEFAULT_TEMPLATES, INSTRUCTION_CLASSES


class TestAdapterConfig:
    def test_defaults(self):
        cfg = AdapterConfig(model="stub:0", output_path="out.jsonl")
        assert cfg.device == "cpu"
        assert cfg.batch_size == 1
        assert cfg.templates == DEFAULT_TEMPLATES

    def test_every_class_has_a_default_template(self):
        assert set(DEFAULT_TEMPLATES) == set(INSTRUCTION_CLASSES)
        for template in DEFAULT_TEMPLATES.values():
            assert "{question}" in template

    def test_empty_model_rejected(self):
        with pytest.raises(ValueError, match="model"):
            AdapterConfig(model="", output_path="out.jsonl")

    def test_batch_size_below_one_rejected(self):
        with pytest.raises(ValueError, match="batch_size"):
            AdapterConfig(model="stub:0", output_path="out.jsonl", batch_size=0)

    def test_missing_class_template_rejected(self):
        with pytest.raises(ValueError, match="complex_reasoning"):
            AdapterConfig(
                model="stub:0",
                output_path="out.jsonl",
                templates={"conversation": "{question}", "detailed_description": "{question}"},
            )

    def test_template_without_question_slot_rejected(self):
        bad = dict(DEFAULT_TEMPLATES)
        bad["conversation"] = "ASSISTANT:"
        with pytest.raises(ValueError, match="slot"):
            AdapterConfig(model="stub:0", output_path="out.jsonl", templates=bad)


class TestQaPairInput:
    def test_valid(self):
        pair = QaPairInput(
            image_path="imgs/cat.jpg",
            question="What animal is shown?",
            answer="A cat.",
            instruction_class="conversation",
        )
        assert pair.image_path == "imgs/cat.jpg"

    def test_empty_image_path_rejected(self):
        with pytest.raises(PairsFormatError, match="image_path"):
            QaPairInput(image_path="", question="q", answer="a", instruction_class="conversation")

    def test_empty_question_rejected(self):
        with pytest.raises(PairsFormatError, match="question"):
            QaPairInput(image_path="i.jpg", question="", answer="a", instruction_class="conversation")

    def test_unknown_class_rejected(self):
        with pytest.raises(PairsFormatError, match="instruction_class"):
            QaPairInput(image_path="i.jpg", question="q", answer="a", instruction_class="chitchat")


def write_pairs(path, records):
    path.write_text("".join(json.dumps(r) + "\n" for r in records), encoding="utf-8")


class TestLoadPairs:
    def test_loads_in_order(self, tmp_path):
        path = tmp_path / "pairs.jsonl"
        write_pairs(
            path,
            [
                {"image_path": "a.jpg", "question": "What is it?", "answer": "A dog.", "instruction_class": "conversation"},
                {"image_path": "b.jpg", "question": "Describe.", "answer": "A park.", "instruction_class": "detailed_description"},
            ],
        )
        pairs = load_pairs(path)
        assert [p.image_path for p in pairs] == ["a.jpg", "b.jpg"]
        assert pairs[1].instruction_class == "detailed_description"

    def test_token_array_text_fields_joined(self, tmp_path):
        path = tmp_path / "pairs.jsonl"
        write_pairs(
            path,
            [
                {
                    "image_path": "a.jpg",
                    "question": ["What", "is", "it?"],
                    "answer": ["A", "dog."],
                    "instruction_class": "conversation",
                }
            ],
        )
        (pair,) = load_pairs(path)
        assert pair.question == "What is it?"
        assert pair.answer == "A dog."

    def test_blank_lines_skipped(self, tmp_path):
        path = tmp_path / "pairs.jsonl"
        record = {"image_path": "a.jpg", "question": "q?", "answer": "a.", "instruction_class": "conversation"}
        path.write_text("\n" + json.dumps(record) + "\n\n", encoding="utf-8")
        assert len(load_pairs(path)) == 1

    def test_bad_json_reports_line(self, tmp_path):
        path = tmp_path / "pairs.jsonl"
        record = {"image_path": "a.jpg", "question": "q?", "answer": "a.", "instruction_class": "conversation"}
        path.write_text(json.dumps(record) + "\n{not json\n", encoding="utf-8")
        with pytest.raises(PairsFormatError, match="line 2"):
            load_pairs(path)

    def test_missing_field_reports_line(self, tmp_path):
        path = tmp_path / "pairs.jsonl"
        write_pairs(path, [{"image_path": "a.jpg", "answer": "a.", "instruction_class": "conversation"}])
        with pytest.raises(PairsFormatError, match="question"):
            load_pairs(path)

    def test_non_object_line_rejected(self, tmp_path):
        path = tmp_path / "pairs.jsonl"
        path.write_text("[1,2,3]\n", encoding="utf-8")
        with pytest.raises(PairsFormatError, match="not an object"):
            load_pairs(path)

    def test_mixed_array_rejected(self, tmp_path):
        path = tmp_path / "pairs.jsonl"
        write_pairs(
            path,
            [{"image_path": "a.jpg", "question": ["ok", 3], "answer": "a.", "instruction_class": "conversation"}],
        )
        with pytest.raises(PairsFormatError, match="strings"):
            load_pairs(path)
