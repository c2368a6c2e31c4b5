# Front-door estimation library - source package
