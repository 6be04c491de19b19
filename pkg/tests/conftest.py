import torch

# single-threaded torch keeps every test deterministic on any box
torch.set_num_threads(1)
