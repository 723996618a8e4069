def latin():
    return "caf�"
