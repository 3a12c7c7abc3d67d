df = pd.read_csv("train.csv")
doc = """first line
second 'line' with # not a comment
closing""" + extra
print(doc)
