"""Reserved vocabulary ids shared by every vocabulary."""

PAD_ID = 0
UNK_ID = 1
PAD_TOKEN = "<pad>"
UNK_TOKEN = "<unk>"
RESERVED_IDS = (PAD_ID, UNK_ID)
