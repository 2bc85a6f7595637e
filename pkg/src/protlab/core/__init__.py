# Core package - configuration, paths and the shared error root
