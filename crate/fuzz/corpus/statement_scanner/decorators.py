@cache
def helper(x):
    # comment inside body
    y = {"a": [1, 2], "b": (3,)}
    return y[x]

class Trainer:
    """docstring"""
    def run(self):
        pass
