from msdhawkes.cli import main

main()
