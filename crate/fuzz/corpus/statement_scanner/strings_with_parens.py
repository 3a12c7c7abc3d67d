name = "call(not_really)"
s = 'it\'s fine'
plot(x, label="f(x)")
