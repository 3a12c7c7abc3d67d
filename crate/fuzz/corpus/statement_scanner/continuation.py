total = first_part + \
    second_part
model.fit(
    X_train,
    y_train,
)
