"""How commit text becomes fixed-shape token-id matrices: tokenization,
per-file change documents with the added/removed headers, vocabulary
construction, and padding/truncation.

Run:  python demos/02_text_encoding.py
"""

from jitdp.corpus import CommitRecord, FileChange
from jitdp.textprep import (
    MICRO_SHAPE,
    build_vocab,
    decode_ids,
    encode_commit,
    render_change_document,
    tokenize,
)

print("tokenizer:", tokenize("Fix NPE in Parser.java"))

# Each changed file becomes one sequence: a header, all added lines in
# order, a second header, all removed lines in order.
change = FileChange(
    path="core/util/math.py",
    added_lines=("total = safe_sum(values);", "return total;"),
    removed_lines=("return sum(values);",),
    loc_before=58,
)
doc = render_change_document(change)
print("\nchange document:")
print(" ", doc)

commit = CommitRecord(
    commit_id="demo", timestamp=1_700_000_000, author="pat",
    message="fix overflow in safe_sum", files=(change,))

# The vocabulary comes from training-split documents only; ids 0..3 are
# reserved for padding, unknown, and the two headers.
vocab = build_vocab([tokenize(commit.message), doc], min_frequency=1)
print(f"\nvocabulary: {len(vocab)} entries "
      f"(4 reserved + {len(vocab.token_to_id)} tokens)")

encoded = encode_commit(commit, vocab, MICRO_SHAPE)
print(f"message ids ({MICRO_SHAPE.l_msg} wide): {encoded.message_ids[:10]} ...")
print(f"file matrix shape: {encoded.file_ids.shape}")
print("decoded message prefix:", decode_ids(encoded.message_ids, vocab))
print("decoded file row starts with header:",
      decode_ids(encoded.file_ids[0], vocab)[:6])
