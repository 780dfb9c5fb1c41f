# MIT License
# Copyright (c) 2025 Ronnie Garrison
from .cli import main

if __name__ == "__main__":
    main()
